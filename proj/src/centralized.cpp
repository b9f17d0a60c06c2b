#include "rfl/centralized.hpp"

#include <numeric>

namespace rfl {

std::vector<std::vector<Index>> epoch_batches(Index n, Index batch, std::uint64_t seed,
                                              int epoch) {
  if (batch < 1 || batch > n) throw ConfigError("batch size must lie in [1, N]");
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed, {0x626174u, static_cast<std::uint64_t>(epoch)});  // "bat"
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<Index>> batches;
  for (Index at = 0; at < n; at += batch) {
    Index len = std::min(batch, n - at);
    batches.emplace_back(order.begin() + at, order.begin() + at + len);
  }
  return batches;
}

double block_objective(std::span<const Matrix> blocks, const Vector& y,
                       std::span<const LocalModel> models, const LossSpec& loss) {
  Matrix z = Matrix::Zero(y.size(), models[0].spec().output_dim);
  for (std::size_t i = 0; i < blocks.size(); ++i) z += models[i].forward(blocks[i]);
  double obj = loss_value(loss, z, y);
  if (loss.reg == RegKind::l2) {
    for (const auto& m : models) obj += loss.beta * m.reg_value();
  }
  return obj;
}

CentralizedResult centralized_train(std::span<const Matrix> blocks, const Vector& y,
                                    std::span<const ModelSpec> specs, const LossSpec& loss,
                                    int epochs, double eta, Index batch, std::uint64_t seed,
                                    const EpochHook& on_epoch) {
  const auto m = blocks.size();
  const Index n = y.size();
  CentralizedResult res;
  for (const auto& spec : specs) res.models.push_back(LocalModel::init(spec));
  loss.validate(specs[0].output_dim);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (const auto& rows : epoch_batches(n, batch, seed, epoch)) {
      const Index b = static_cast<Index>(rows.size());
      std::vector<Matrix> xb(m);
      Matrix z = Matrix::Zero(b, specs[0].output_dim);
      for (std::size_t i = 0; i < m; ++i) {
        xb[i].resize(b, blocks[i].cols());
        for (Index r = 0; r < b; ++r) xb[i].row(r) = blocks[i].row(rows[r]);
        z += res.models[i].forward(xb[i]);
      }
      Vector yb(b);
      for (Index r = 0; r < b; ++r) yb(r) = y(rows[r]);
      Matrix v = loss_and_grad(loss, z, yb).row_gradients;
      for (std::size_t i = 0; i < m; ++i) {
        Vector g = res.models[i].backward(xb[i], v) / static_cast<double>(b);
        if (loss.reg == RegKind::l2) g += loss.beta * res.models[i].reg_gradient();
        res.models[i].params() -= eta * g;
      }
    }
    res.epoch_train_loss.push_back(block_objective(blocks, y, res.models, loss));
    if (on_epoch) on_epoch(epoch, res.models);
  }
  return res;
}

}  // namespace rfl
