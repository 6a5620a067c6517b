#pragma once

#include "graphpatch/graph.hpp"

#include <cstdint>
#include <filesystem>

namespace gp {

/// Degree-corrected stochastic block model with class-mean features.
struct SynthConfig {
  int nodes = 2000;
  int classes = 5;
  double p_in = 0.01;
  double p_out = 0.0005;
  double gamma = 0.7;  // degree skew; node weights ~ u^-gamma, 0 gives a plain SBM
  int dim = 16;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

/// Builds the graph in memory: weights w_i = u_i^-gamma normalised to mean 1,
/// edge (i, j) with probability min(1, w_i w_j p), features e_class + sigma N(0, I),
/// and a random 10%/10%/80% train/valid/test split.
Graph generate_synth(const SynthConfig& cfg);

/// generate_synth plus save_graph and gen-config.json in `out_dir`.
Graph gen_synth(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace gp
