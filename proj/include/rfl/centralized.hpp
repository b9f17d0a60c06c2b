#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rfl/loss.hpp"
#include "rfl/model.hpp"
#include "rfl/rng.hpp"

namespace rfl {

/// Seeded batch order shared by the centralized trainer and the federated
/// drivers: a per-epoch shuffle of [0, n) chopped into ceil(n/batch) chunks.
std::vector<std::vector<Index>> epoch_batches(Index n, Index batch, std::uint64_t seed,
                                              int epoch);

struct CentralizedResult {
  std::vector<LocalModel> models;       // block model, one per organization
  std::vector<double> epoch_train_loss; // objective after each epoch
};

using EpochHook = std::function<void(int epoch, std::span<const LocalModel>)>;

/// Mini-batch SGD on the materialized join: the global model is the sum of
/// per-organization blocks applied to their feature slices. Serves as the
/// accuracy baseline and as the exact-gradient oracle for the decomposed
/// algorithms.
CentralizedResult centralized_train(std::span<const Matrix> blocks, const Vector& y,
                                    std::span<const ModelSpec> specs, const LossSpec& loss,
                                    int epochs, double eta, Index batch, std::uint64_t seed,
                                    const EpochHook& on_epoch = nullptr);

/// Objective (1/N) sum_j l(sum_i f_i(x_ij); y_j) + beta * sum_i R_i(theta_i)
/// on materialized blocks.
double block_objective(std::span<const Matrix> blocks, const Vector& y,
                       std::span<const LocalModel> models, const LossSpec& loss);

}  // namespace rfl
