"""Fit alpha/beta/gamma to the published latencies and print (or write) JSON.

    python3 scripts/fit_cost_params.py --m 8 --out cost.json
    tpaware-bench --mode project --cost-params cost.json
"""
import argparse

from tpaware import costmodel, reference_data


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--model", default="llama70b", choices=sorted(reference_data.SHAPES))
    p.add_argument("--gpu", default="A100", choices=["A100", "H100"])
    p.add_argument("--m", type=int, default=8, choices=[1, 2, 4, 8, 16])
    p.add_argument("--out")
    args = p.parse_args()
    text = costmodel.fit_cost_params(args.model, args.gpu, m=args.m).to_json() + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")


if __name__ == "__main__":
    main()
