"""Published MLP-block latencies (ms) for FP16 GPTQ act_order weights.

``LATENCIES[(model, gpu, tp)]`` maps batch size M to ``(naive_ms, tp_aware_ms)``.
``REPORTED_AVG_SPEEDUP[(model, gpu)]`` maps tp to the reported mean speedup.
"""

SHAPES = {
    "llama70b": (8192, 28672, 8192),
    "granite20b": (6144, 24576, 6144),
}

LATENCIES = {
    ("llama70b", "A100", 1): {1: (0.696, 0.688), 2: (0.694, 0.683), 4: (0.685, 0.678), 8: (0.706, 0.697), 16: (0.710, 0.695)},
    ("llama70b", "H100", 1): {1: (0.489, 0.481), 2: (0.471, 0.466), 4: (0.474, 0.468), 8: (0.471, 0.464), 16: (0.474, 0.468)},
    ("llama70b", "A100", 2): {1: (0.493, 0.433), 2: (0.508, 0.407), 4: (0.519, 0.412), 8: (0.516, 0.418), 16: (0.501, 0.416)},
    ("llama70b", "H100", 2): {1: (0.302, 0.283), 2: (0.316, 0.285), 4: (0.323, 0.286), 8: (0.320, 0.289), 16: (0.322, 0.289)},
    ("llama70b", "A100", 4): {1: (0.472, 0.282), 2: (0.512, 0.286), 4: (0.513, 0.287), 8: (0.518, 0.285), 16: (0.512, 0.286)},
    ("llama70b", "H100", 4): {1: (0.258, 0.192), 2: (0.275, 0.192), 4: (0.273, 0.193), 8: (0.278, 0.197), 16: (0.281, 0.198)},
    ("llama70b", "A100", 8): {1: (0.495, 0.284), 2: (0.503, 0.276), 4: (0.539, 0.291), 8: (0.530, 0.286), 16: (0.512, 0.286)},
    ("llama70b", "H100", 8): {1: (0.245, 0.144), 2: (0.256, 0.146), 4: (0.257, 0.144), 8: (0.258, 0.145), 16: (0.266, 0.149)},
    ("granite20b", "A100", 1): {1: (0.482, 0.474), 2: (0.476, 0.471), 4: (0.482, 0.469), 8: (0.479, 0.467), 16: (0.487, 0.475)},
    ("granite20b", "H100", 1): {1: (0.349, 0.341), 2: (0.335, 0.328), 4: (0.325, 0.319), 8: (0.335, 0.327), 16: (0.335, 0.328)},
    # M in {2, 4, 8} at tp=2 are near-1.0x outliers among 1.57x-1.65x neighbours
    ("granite20b", "A100", 2): {1: (0.486, 0.309), 2: (0.476, 0.471), 4: (0.482, 0.469), 8: (0.479, 0.467), 16: (0.504, 0.306)},
    ("granite20b", "H100", 2): {1: (0.263, 0.214), 2: (0.279, 0.218), 4: (0.284, 0.220), 8: (0.285, 0.220), 16: (0.285, 0.221)},
    ("granite20b", "A100", 4): {1: (0.500, 0.292), 2: (0.497, 0.284), 4: (0.518, 0.293), 8: (0.508, 0.284), 16: (0.530, 0.290)},
    ("granite20b", "H100", 4): {1: (0.251, 0.156), 2: (0.267, 0.157), 4: (0.268, 0.158), 8: (0.269, 0.159), 16: (0.269, 0.159)},
    ("granite20b", "A100", 8): {1: (0.512, 0.294), 2: (0.530, 0.291), 4: (0.537, 0.293), 8: (0.541, 0.305), 16: (0.551, 0.303)},
    ("granite20b", "H100", 8): {1: (0.252, 0.148), 2: (0.255, 0.142), 4: (0.259, 0.141), 8: (0.257, 0.140), 16: (0.255, 0.140)},
}

REPORTED_AVG_SPEEDUP = {
    ("llama70b", "A100"): {2: 1.22, 4: 1.78, 8: 1.81},
    ("llama70b", "H100"): {2: 1.11, 4: 1.40, 8: 1.76},
    ("granite20b", "A100"): {2: 1.26, 4: 1.77, 8: 1.80},
    ("granite20b", "H100"): {2: 1.28, 4: 1.68, 8: 1.78},
}

# fp16 activations
ELEM_BYTES = 2
