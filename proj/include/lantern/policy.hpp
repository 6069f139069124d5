#pragma once

#include <vector>

#include "lantern/autodiff.hpp"
#include "lantern/generator.hpp"

namespace lantern {

/// Differentiable replay of a recorded rollout against trainable generator
/// parameters. Actions (drawn slots) are held fixed.
struct PolicyGraph {
  std::vector<ad::Var> log_pi;  // step k = 1..T at index k-1
  ad::Var times;                // 1 x (T+1); generated times as functions of W_T', b_T' and h
};

/// With `time_path` false the returned times are constants. Otherwise
/// t_k = t_{k-1} + softplus(W_T' h_src + b_T') is recorded on the tape, with h
/// computed from the rollout's (constant) times.
PolicyGraph build_policy_graph(ad::Tape& tape, ParameterStore& store, const GeneratorConfig& cfg,
                               const DescendantTable& table, const Rollout& rollout, bool time_path);

}  // namespace lantern
