#include "verbknow/nn.h"

#include <cmath>
#include <limits>

#include "verbknow/common.h"

namespace verbknow {

std::string ParamGroupName(ParamGroup g) {
  switch (g) {
    case ParamGroup::kEncoder: return "encoder";
    case ParamGroup::kVerbAdapter: return "verb_adapter";
    case ParamGroup::kTaskAdapter: return "task_adapter";
    case ParamGroup::kHead: return "head";
  }
  return "unknown";
}

bool FreezeFlags::Frozen(ParamGroup g) const {
  switch (g) {
    case ParamGroup::kEncoder: return encoder;
    case ParamGroup::kVerbAdapter: return verb_adapter;
    case ParamGroup::kTaskAdapter: return task_adapter;
    case ParamGroup::kHead: return heads;
  }
  return true;
}

void InitNormal(Matrix& m, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

double Gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double GeluGrad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * M_2_SQRTPI * M_SQRT1_2;
  return cdf + x * pdf;
}

Matrix Gelu(const Matrix& x) { return x.unaryExpr([](double v) { return Gelu(v); }); }

Matrix GeluBackward(const Matrix& x, const Matrix& dy) {
  return dy.cwiseProduct(x.unaryExpr([](double v) { return GeluGrad(v); }));
}

Matrix SoftmaxRows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    RowVector e = (logits.row(i).array() - mx).exp().matrix();
    out.row(i) = e / e.sum();
  }
  return out;
}

double LogSumExp(const Eigen::Ref<const RowVector>& v) {
  const double mx = v.maxCoeff();
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

Linear::Linear(const std::string& name, ParamGroup group, Eigen::Index in, Eigen::Index out)
    : weight(name + ".weight", group, in, out), bias(name + ".bias", group, 1, out) {}

Matrix Linear::Forward(const Matrix& x) const {
  Matrix y = x * weight.value;
  y.rowwise() += bias.value.row(0);
  return y;
}

Matrix Linear::Backward(const Matrix& x, const Matrix& dy, bool accumulate) {
  if (accumulate) {
    weight.grad.noalias() += x.transpose() * dy;
    bias.grad.row(0) += dy.colwise().sum();
  }
  return dy * weight.value.transpose();
}

LayerNorm::LayerNorm(const std::string& name, ParamGroup group, Eigen::Index h, double e)
    : gamma(name + ".gamma", group, 1, h), beta(name + ".beta", group, 1, h), eps(e) {
  gamma.value.setOnes();
}

Matrix LayerNorm::Forward(const Matrix& x, LayerNormCache* cache) const {
  const Eigen::Index n = x.rows(), h = x.cols();
  Matrix xhat(n, h);
  Vector inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    RowVector centered = x.row(i).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(h);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = centered * inv_std[i];
  }
  Matrix y = xhat.array().rowwise() * gamma.value.row(0).array();
  y.rowwise() += beta.value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix LayerNorm::Backward(const LayerNormCache& cache, const Matrix& dy, bool accumulate) {
  const Eigen::Index n = dy.rows(), h = dy.cols();
  if (accumulate) {
    gamma.grad.row(0) += dy.cwiseProduct(cache.xhat).colwise().sum();
    beta.grad.row(0) += dy.colwise().sum();
  }
  Matrix dxhat = dy.array().rowwise() * gamma.value.row(0).array();
  Matrix dx(n, h);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean_d = dxhat.row(i).mean();
    const double mean_dx = dxhat.row(i).dot(cache.xhat.row(i)) / static_cast<double>(h);
    dx.row(i) = (dxhat.row(i).array() - mean_d - cache.xhat.row(i).array() * mean_dx) *
                cache.inv_std[i];
  }
  return dx;
}

void Adam::Step(const std::vector<Param*>& params) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (Param* p : params) {
    auto [it, inserted] = state_.try_emplace(p->name);
    Moments& s = it->second;
    if (inserted) {
      s.m = Matrix::Zero(p->value.rows(), p->value.cols());
      s.v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * p->grad;
    s.v = cfg_.beta2 * s.v + (1.0 - cfg_.beta2) * p->grad.cwiseAbs2();
    p->value.array() -= cfg_.learning_rate * (s.m.array() / bc1) /
                        ((s.v.array() / bc2).sqrt() + cfg_.epsilon);
  }
}

void ZeroGrads(const std::vector<Param*>& params) {
  for (Param* p : params) p->ZeroGrad();
}

double GradNorm(const std::vector<Param*>& params) {
  double s = 0.0;
  for (const Param* p : params) s += p->grad.squaredNorm();
  return std::sqrt(s);
}

Eigen::Index CountParams(const std::vector<Param*>& params) {
  Eigen::Index n = 0;
  for (const Param* p : params) n += p->size();
  return n;
}

}  // namespace verbknow
