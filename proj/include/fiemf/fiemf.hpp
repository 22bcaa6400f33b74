#pragma once

// Umbrella header for the whole library.

#include "fiemf/baselines.hpp"
#include "fiemf/checkpoint.hpp"
#include "fiemf/error.hpp"
#include "fiemf/experiment.hpp"
#include "fiemf/fiemf_model.hpp"
#include "fiemf/fuzzy_similarity.hpp"
#include "fiemf/latent_model.hpp"
#include "fiemf/metrics.hpp"
#include "fiemf/qos_matrix.hpp"
#include "fiemf/reference_results.hpp"
#include "fiemf/region_bias.hpp"
#include "fiemf/rng.hpp"
#include "fiemf/user_regions.hpp"
