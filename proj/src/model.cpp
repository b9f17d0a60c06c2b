#include "rfl/model.hpp"

#include <cstring>
#include <fstream>

#include "rfl/rng.hpp"

namespace rfl {
namespace {

using ConstMap = Eigen::Map<const Matrix>;

Index extended_input(const ModelSpec& s) { return s.input_dim + (s.bias ? 1 : 0); }

Index param_count_for(const ModelSpec& s) {
  const Index d = extended_input(s);
  return s.kind == ModelKind::linear ? d * s.output_dim : d * s.hidden + s.hidden * s.output_dim;
}

void check_width(const ModelSpec& s, Index cols) {
  if (cols != s.input_dim) {
    throw SchemaError("model expects " + std::to_string(s.input_dim) + " feature columns, got " +
                      std::to_string(cols));
  }
}

constexpr std::uint32_t kMagic = 0x4D4C4652;  // "RFLM"

}  // namespace

LocalModel LocalModel::init(const ModelSpec& spec) {
  if (spec.input_dim < 1 || spec.output_dim < 1 || (spec.kind == ModelKind::mlp && spec.hidden < 1)) {
    throw ConfigError("model dimensions must be positive");
  }
  LocalModel m;
  m.spec_ = spec;
  m.params_ = Vector::Zero(param_count_for(spec));
  const Index d = extended_input(spec);
  if (spec.kind == ModelKind::mlp) {
    Rng rng(spec.rng_seed, {0x6d6c70});  // "mlp" stream
    double b1 = 1.0 / std::sqrt(static_cast<double>(d));
    double b2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden));
    for (Index k = 0; k < d * spec.hidden; ++k) m.params_(k) = rng.uniform(-b1, b1);
    for (Index k = d * spec.hidden; k < m.params_.size(); ++k) m.params_(k) = rng.uniform(-b2, b2);
  }
  // Bias coordinates (the appended constant-1 input row) carry no L2 penalty.
  m.reg_mask_ = Vector::Ones(m.params_.size());
  if (spec.bias) {
    const Index out_cols = spec.kind == ModelKind::linear ? spec.output_dim : spec.hidden;
    for (Index c = 0; c < out_cols; ++c) m.reg_mask_(c * d + (d - 1)) = 0.0;
  }
  return m;
}

Matrix LocalModel::with_bias(const Eigen::Ref<const Matrix>& rows) const {
  check_width(spec_, rows.cols());
  if (!spec_.bias) return rows;
  Matrix ext(rows.rows(), rows.cols() + 1);
  ext.leftCols(rows.cols()) = rows;
  ext.col(rows.cols()).setOnes();
  return ext;
}

Matrix LocalModel::forward(const Eigen::Ref<const Matrix>& rows) const {
  const Matrix x = with_bias(rows);
  const Index d = extended_input(spec_);
  if (spec_.kind == ModelKind::linear) {
    ConstMap w(params_.data(), d, spec_.output_dim);
    return x * w;
  }
  ConstMap w1(params_.data(), d, spec_.hidden);
  ConstMap w2(params_.data() + d * spec_.hidden, spec_.hidden, spec_.output_dim);
  Matrix h = (x * w1).array().tanh();
  return h * w2;
}

Vector LocalModel::backward(const Eigen::Ref<const Matrix>& rows,
                            const Eigen::Ref<const Matrix>& upstream) const {
  const Matrix x = with_bias(rows);
  if (upstream.rows() != rows.rows() || upstream.cols() != spec_.output_dim) {
    throw SchemaError("backward: upstream shape mismatch");
  }
  const Index d = extended_input(spec_);
  Vector grad = Vector::Zero(params_.size());
  if (spec_.kind == ModelKind::linear) {
    Eigen::Map<Matrix> gw(grad.data(), d, spec_.output_dim);
    gw.noalias() = x.transpose() * upstream;
    return grad;
  }
  ConstMap w1(params_.data(), d, spec_.hidden);
  ConstMap w2(params_.data() + d * spec_.hidden, spec_.hidden, spec_.output_dim);
  Matrix h = (x * w1).array().tanh();
  Eigen::Map<Matrix> gw1(grad.data(), d, spec_.hidden);
  Eigen::Map<Matrix> gw2(grad.data() + d * spec_.hidden, spec_.hidden, spec_.output_dim);
  gw2.noalias() = h.transpose() * upstream;
  Matrix ga = (upstream * w2.transpose()).cwiseProduct(Matrix(1.0 - h.array().square()));
  gw1.noalias() = x.transpose() * ga;
  return grad;
}

Matrix LocalModel::per_sample_gradients(const Eigen::Ref<const Matrix>& rows,
                                        const Eigen::Ref<const Matrix>& upstream) const {
  Matrix out(rows.rows(), params_.size());
  for (Index k = 0; k < rows.rows(); ++k) {
    out.row(k) = backward(rows.middleRows(k, 1), upstream.middleRows(k, 1)).transpose();
  }
  return out;
}

double LocalModel::reg_value() const { return params_.cwiseProduct(reg_mask_).squaredNorm(); }

Vector LocalModel::reg_gradient() const { return 2.0 * params_.cwiseProduct(reg_mask_); }

void LocalModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto put64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  put32(kMagic);
  put32(spec_.kind == ModelKind::linear ? 0 : 1);
  put32(static_cast<std::uint32_t>(spec_.input_dim));
  put32(static_cast<std::uint32_t>(spec_.output_dim));
  put32(static_cast<std::uint32_t>(spec_.hidden));
  put32(spec_.bias ? 1 : 0);
  put64(spec_.rng_seed);
  put64(static_cast<std::uint64_t>(params_.size()));
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(params_.size() * sizeof(double)));
}

LocalModel LocalModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint '" + path + "'");
  auto get32 = [&] {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto get64 = [&] {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  if (get32() != kMagic) throw ParseError("checkpoint '" + path + "' has wrong magic");
  ModelSpec spec;
  spec.kind = get32() == 0 ? ModelKind::linear : ModelKind::mlp;
  spec.input_dim = static_cast<Index>(get32());
  spec.output_dim = static_cast<Index>(get32());
  spec.hidden = static_cast<Index>(get32());
  spec.bias = get32() != 0;
  spec.rng_seed = get64();
  const auto count = static_cast<Index>(get64());
  LocalModel m = init(spec);
  if (count != m.param_count()) throw ParseError("checkpoint '" + path + "' has wrong size");
  in.read(reinterpret_cast<char*>(m.params_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw ParseError("checkpoint '" + path + "' is truncated");
  return m;
}

}  // namespace rfl
