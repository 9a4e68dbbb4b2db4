#include "verbknow/crf.h"

#include <cmath>
#include <limits>

#include "verbknow/common.h"

namespace verbknow {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void CheckEmissions(const CrfParams& crf, const Matrix& emissions) {
  if (emissions.rows() < 1) throw ValidationError("CRF needs a sequence of length >= 1");
  if (emissions.cols() != crf.num_tags()) {
    throw ValidationError("emission width " + std::to_string(emissions.cols()) +
                          " does not match " + std::to_string(crf.num_tags()) + " tags");
  }
}

void CheckPath(const CrfParams& crf, const Matrix& emissions, const std::vector<int>& path) {
  CheckEmissions(crf, emissions);
  if (static_cast<Eigen::Index>(path.size()) != emissions.rows()) {
    throw ValidationError("path length differs from emission length");
  }
  for (int tag : path) {
    if (tag < 0 || tag >= crf.num_tags()) {
      throw ValidationError("tag index " + std::to_string(tag) + " out of range");
    }
  }
}

Matrix EffectiveTransitions(const CrfParams& crf) {
  const int k = crf.num_tags();
  Matrix t(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) t(i, j) = crf.Trans(i, j);
  }
  return t;
}

// alpha(t, j): log-sum of all prefixes ending in tag j at t.
Matrix ForwardTable(const CrfParams& crf, const Matrix& e, const Matrix& trans) {
  const Eigen::Index n = e.rows();
  const int k = crf.num_tags();
  Matrix alpha(n, k);
  for (int j = 0; j < k; ++j) alpha(0, j) = crf.Start(j) + e(0, j);
  RowVector tmp(k);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (int j = 0; j < k; ++j) {
      for (int i = 0; i < k; ++i) tmp[i] = alpha(t - 1, i) + trans(i, j);
      alpha(t, j) = LogSumExp(tmp) + e(t, j);
    }
  }
  return alpha;
}

// beta(t, j): log-sum of all suffixes after tag j at t (excludes e(t, j)).
Matrix BackwardTable(const CrfParams& crf, const Matrix& e, const Matrix& trans) {
  const Eigen::Index n = e.rows();
  const int k = crf.num_tags();
  Matrix beta(n, k);
  for (int j = 0; j < k; ++j) beta(n - 1, j) = crf.End(j);
  RowVector tmp(k);
  for (int t = static_cast<int>(n) - 2; t >= 0; --t) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) tmp[j] = trans(i, j) + e(t + 1, j) + beta(t + 1, j);
      beta(t, i) = LogSumExp(tmp);
    }
  }
  return beta;
}

double FinishForward(const CrfParams& crf, const Matrix& alpha) {
  const int k = crf.num_tags();
  RowVector last(k);
  for (int j = 0; j < k; ++j) last[j] = alpha(alpha.rows() - 1, j) + crf.End(j);
  const double z = LogSumExp(last);
  if (z == kNegInf) throw ValidationError("CRF has no valid tag path under the transition mask");
  return z;
}

}  // namespace

CrfParams::CrfParams(const std::string& name, ParamGroup group, int num_tags)
    : transitions(name + ".transitions", group, num_tags, num_tags),
      start(name + ".start", group, 1, num_tags),
      end(name + ".end", group, 1, num_tags),
      allowed(Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(num_tags, num_tags, true)),
      start_allowed(Eigen::Array<bool, 1, Eigen::Dynamic>::Constant(1, num_tags, true)) {
  if (num_tags < 1) throw ValidationError("CRF needs at least one tag");
}

double CrfParams::Trans(int from, int to) const {
  return allowed(from, to) ? transitions.value(from, to) : kNegInf;
}

double CrfParams::Start(int tag) const {
  return start_allowed(tag) ? start.value(0, tag) : kNegInf;
}

double CrfParams::End(int tag) const { return end.value(0, tag); }

double CrfScore(const CrfParams& crf, const Matrix& emissions, const std::vector<int>& path) {
  CheckPath(crf, emissions, path);
  double s = crf.Start(path[0]) + emissions(0, path[0]);
  for (size_t t = 1; t < path.size(); ++t) {
    s += crf.Trans(path[t - 1], path[t]) + emissions(static_cast<Eigen::Index>(t), path[t]);
  }
  return s + crf.End(path.back());
}

double CrfLogPartition(const CrfParams& crf, const Matrix& emissions) {
  CheckEmissions(crf, emissions);
  return FinishForward(crf, ForwardTable(crf, emissions, EffectiveTransitions(crf)));
}

double CrfLogPartitionBackward(const CrfParams& crf, const Matrix& emissions) {
  CheckEmissions(crf, emissions);
  const Matrix beta = BackwardTable(crf, emissions, EffectiveTransitions(crf));
  const int k = crf.num_tags();
  RowVector first(k);
  for (int j = 0; j < k; ++j) first[j] = crf.Start(j) + emissions(0, j) + beta(0, j);
  const double z = LogSumExp(first);
  if (z == kNegInf) throw ValidationError("CRF has no valid tag path under the transition mask");
  return z;
}

double CrfLogLikelihood(const CrfParams& crf, const Matrix& emissions,
                        const std::vector<int>& path) {
  return CrfScore(crf, emissions, path) - CrfLogPartition(crf, emissions);
}

Matrix CrfNllBackward(CrfParams& crf, const Matrix& emissions, const std::vector<int>& path,
                      bool accumulate, double scale) {
  CheckPath(crf, emissions, path);
  const Matrix trans = EffectiveTransitions(crf);
  const Matrix alpha = ForwardTable(crf, emissions, trans);
  const Matrix beta = BackwardTable(crf, emissions, trans);
  const double z = FinishForward(crf, alpha);
  const Eigen::Index n = emissions.rows();
  const int k = crf.num_tags();

  // Unary marginals minus the gold indicator.
  Matrix d_em = ((alpha + beta).array() - z).exp().matrix();
  for (Eigen::Index t = 0; t < n; ++t) d_em(t, path[static_cast<size_t>(t)]) -= 1.0;
  d_em *= scale;
  if (!accumulate) return d_em;

  // Start/end marginals coincide with the unary marginals at the two ends.
  crf.start.grad.row(0) += d_em.row(0);
  crf.end.grad.row(0) += d_em.row(n - 1);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        if (!crf.allowed(i, j)) continue;
        crf.transitions.grad(i, j) +=
            scale * std::exp(alpha(t - 1, i) + trans(i, j) + emissions(t, j) + beta(t, j) - z);
      }
    }
    crf.transitions.grad(path[static_cast<size_t>(t - 1)], path[static_cast<size_t>(t)]) -= scale;
  }
  return d_em;
}

Matrix CrfMarginals(const CrfParams& crf, const Matrix& emissions) {
  CheckEmissions(crf, emissions);
  const Matrix trans = EffectiveTransitions(crf);
  const Matrix alpha = ForwardTable(crf, emissions, trans);
  const Matrix beta = BackwardTable(crf, emissions, trans);
  const double z = FinishForward(crf, alpha);
  return ((alpha + beta).array() - z).exp().matrix();
}

ViterbiResult CrfViterbi(const CrfParams& crf, const Matrix& emissions) {
  CheckEmissions(crf, emissions);
  const Eigen::Index n = emissions.rows();
  const int k = crf.num_tags();
  const Matrix trans = EffectiveTransitions(crf);

  // best(t, j): max suffix score from tag j at t, including e(t, j) and end.
  Matrix best(n, k);
  for (int j = 0; j < k; ++j) best(n - 1, j) = emissions(n - 1, j) + crf.End(j);
  for (int t = static_cast<int>(n) - 2; t >= 0; --t) {
    for (int i = 0; i < k; ++i) {
      double m = kNegInf;
      for (int j = 0; j < k; ++j) m = std::max(m, trans(i, j) + best(t + 1, j));
      best(t, i) = emissions(t, i) + m;
    }
  }

  // Greedy forward pass: first strict maximum keeps the lowest index.
  ViterbiResult result;
  result.path.resize(static_cast<size_t>(n));
  double top = kNegInf;
  int arg = -1;
  for (int j = 0; j < k; ++j) {
    const double s = crf.Start(j) + best(0, j);
    if (s > top) {
      top = s;
      arg = j;
    }
  }
  if (arg < 0) throw ValidationError("CRF has no valid tag path under the transition mask");
  result.path[0] = arg;
  for (Eigen::Index t = 1; t < n; ++t) {
    const int prev = result.path[static_cast<size_t>(t - 1)];
    double m = kNegInf;
    int a = -1;
    for (int j = 0; j < k; ++j) {
      const double s = trans(prev, j) + best(t, j);
      if (s > m) {
        m = s;
        a = j;
      }
    }
    result.path[static_cast<size_t>(t)] = a;
  }
  result.score = CrfScore(crf, emissions, result.path);
  return result;
}

void ApplyBioMask(CrfParams& crf, const std::vector<std::string>& tags) {
  if (static_cast<int>(tags.size()) != crf.num_tags()) {
    throw ValidationError("tag inventory size differs from CRF size");
  }
  auto type_of = [](const std::string& tag) { return tag.size() > 2 ? tag.substr(2) : std::string(); };
  for (int j = 0; j < crf.num_tags(); ++j) {
    const std::string& to = tags[static_cast<size_t>(j)];
    if (to.rfind("I-", 0) != 0) continue;
    crf.start_allowed(j) = false;
    for (int i = 0; i < crf.num_tags(); ++i) {
      const std::string& from = tags[static_cast<size_t>(i)];
      const bool continues = (from.rfind("B-", 0) == 0 || from.rfind("I-", 0) == 0) &&
                             type_of(from) == type_of(to);
      crf.allowed(i, j) = continues;
    }
  }
}

}  // namespace verbknow
