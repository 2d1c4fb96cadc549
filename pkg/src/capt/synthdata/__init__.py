"""Procedural articulated-object datasets with exact ground truth."""
from .categories import CATEGORIES, Box, CategorySpec, JointTemplate, get_category
from .generator import (AugmentConfig, Instance, JointSpec, PointwiseTargets, SampleRecord,
                        ViewDegenerateError, augment, build_instance, compute_pointwise_targets,
                        random_camera, random_states, sample_view)
from .io import (GENERATOR_VERSION, SampleFormatError, SplitArrays, generate_dataset, load_split,
                 make_sample, read_manifest, read_sample, split_counts, write_sample)
