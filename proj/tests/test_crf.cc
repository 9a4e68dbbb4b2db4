#include <cmath>
#include <functional>
#include <limits>

#include "doctest.h"
#include "verbknow/crf.h"

using namespace verbknow;

namespace {

const double kNegInf = -std::numeric_limits<double>::infinity();

CrfParams RandomCrf(int tags, uint64_t seed) {
  CrfParams crf("crf", ParamGroup::kHead, tags);
  std::mt19937_64 rng(seed);
  InitNormal(crf.transitions.value, 1.0, rng);
  InitNormal(crf.start.value, 1.0, rng);
  InitNormal(crf.end.value, 1.0, rng);
  return crf;
}

Matrix RandomEmissions(int n, int tags, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix e(n, tags);
  InitNormal(e, 1.0, rng);
  return e;
}

// Path score straight from the raw tensors and masks.
double RawScore(const CrfParams& c, const Matrix& e, const std::vector<int>& y) {
  if (!c.start_allowed(y[0])) return kNegInf;
  double s = c.start.value(0, y[0]) + e(0, y[0]);
  for (size_t t = 1; t < y.size(); ++t) {
    if (!c.allowed(y[t - 1], y[t])) return kNegInf;
    s += c.transitions.value(y[t - 1], y[t]) + e(static_cast<Eigen::Index>(t), y[t]);
  }
  return s + c.end.value(0, y.back());
}

// Visits every tag sequence of length n in lexicographic order.
void ForEachPath(int n, int tags, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> y(static_cast<size_t>(n), 0);
  while (true) {
    fn(y);
    int i = n - 1;
    while (i >= 0 && ++y[static_cast<size_t>(i)] == tags) y[static_cast<size_t>(i--)] = 0;
    if (i < 0) return;
  }
}

struct Enumerated {
  double log_z = kNegInf;
  std::vector<int> best;
  double best_score = kNegInf;
  Matrix marginals;
};

Enumerated Enumerate(const CrfParams& c, const Matrix& e) {
  const int n = static_cast<int>(e.rows()), k = c.num_tags();
  Enumerated out;
  std::vector<std::pair<std::vector<int>, double>> all;
  ForEachPath(n, k, [&](const std::vector<int>& y) {
    const double s = RawScore(c, e, y);
    all.emplace_back(y, s);
    if (s > out.best_score) {
      out.best_score = s;
      out.best = y;
    }
  });
  double m = kNegInf;
  for (const auto& [y, s] : all) m = std::max(m, s);
  double sum = 0;
  for (const auto& [y, s] : all) sum += std::exp(s - m);
  out.log_z = m + std::log(sum);
  out.marginals = Matrix::Zero(n, k);
  for (const auto& [y, s] : all) {
    const double p = std::exp(s - out.log_z);
    for (int t = 0; t < n; ++t) out.marginals(t, y[static_cast<size_t>(t)]) += p;
  }
  return out;
}

const std::vector<std::string> kBioTags = {"O", "B-X", "I-X", "B-Y", "I-Y"};

// I-X (2) must follow B-X/I-X; I-Y (4) must follow B-Y/I-Y.
bool ValidBio(const std::vector<int>& path) {
  for (size_t t = 0; t < path.size(); ++t) {
    const int prev = t == 0 ? 0 : path[t - 1];
    if (path[t] == 2 && prev != 1 && prev != 2) return false;
    if (path[t] == 4 && prev != 3 && prev != 4) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("crf") {

TEST_CASE("partition, marginals and viterbi agree with enumeration") {
  for (uint64_t seed = 1; seed <= 6; ++seed) {
    for (int n : {1, 2, 4}) {
      CrfParams crf = RandomCrf(5, seed);
      if (seed % 2 == 0) ApplyBioMask(crf, kBioTags);
      const Matrix e = RandomEmissions(n, 5, seed + 100);
      const Enumerated ref = Enumerate(crf, e);
      CHECK(CrfLogPartition(crf, e) == doctest::Approx(ref.log_z).epsilon(1e-10));
      CHECK(CrfLogPartitionBackward(crf, e) == doctest::Approx(ref.log_z).epsilon(1e-10));
      CHECK((CrfMarginals(crf, e) - ref.marginals).cwiseAbs().maxCoeff() < 1e-9);
      const ViterbiResult v = CrfViterbi(crf, e);
      CHECK(v.path == ref.best);
      CHECK(v.score == doctest::Approx(ref.best_score).epsilon(1e-10));
      CHECK(CrfScore(crf, e, ref.best) == doctest::Approx(ref.best_score).epsilon(1e-10));
    }
  }
}

TEST_CASE("zero scores give log of the path count") {
  CrfParams crf("crf", ParamGroup::kHead, 3);
  CHECK(CrfLogPartition(crf, Matrix::Zero(2, 3)) == doctest::Approx(std::log(9.0)));
  // Ties resolve to the lexicographically smallest path.
  CHECK(CrfViterbi(crf, Matrix::Zero(3, 3)).path == std::vector<int>{0, 0, 0});
}

TEST_CASE("a single position reduces to a softmax") {
  CrfParams crf = RandomCrf(4, 3);
  const Matrix e = RandomEmissions(1, 4, 9);
  const RowVector logits = crf.start.value.row(0) + e.row(0) + crf.end.value.row(0);
  CHECK(CrfLogPartition(crf, e) == doctest::Approx(LogSumExp(logits)));
  const RowVector p = SoftmaxRows(logits);
  CHECK((CrfMarginals(crf, e).row(0) - p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("negative log-likelihood gradients match finite differences") {
  CrfParams crf = RandomCrf(5, 4);
  ApplyBioMask(crf, kBioTags);
  Matrix e = RandomEmissions(4, 5, 8);
  const std::vector<int> gold = {1, 2, 0, 3};
  auto nll = [&] { return -CrfLogLikelihood(crf, e, gold); };
  for (Param* p : crf.Params()) p->ZeroGrad();
  const Matrix d_e = CrfNllBackward(crf, e, gold, true);

  double worst = 0;
  auto check = [&](double& w, double analytic) {
    const double orig = w, eps = 1e-6;
    w = orig + eps;
    const double up = nll();
    w = orig - eps;
    const double down = nll();
    w = orig;
    const double numeric = (up - down) / (2 * eps);
    const double scale = std::abs(numeric) + std::abs(analytic);
    if (scale > 1e-8) worst = std::max(worst, std::abs(numeric - analytic) / scale);
  };
  for (Eigen::Index i = 0; i < e.size(); ++i) check(e.data()[i], d_e.data()[i]);
  for (Param* p : crf.Params()) {
    for (Eigen::Index i = 0; i < p->size(); ++i) {
      // Masked entries never enter a finite-score path.
      check(p->value.data()[i], p->grad.data()[i]);
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("bio mask forbids orphan inside tags") {
  CrfParams crf("crf", ParamGroup::kHead, 5);
  ApplyBioMask(crf, kBioTags);
  CHECK_FALSE(crf.start_allowed(2));
  CHECK_FALSE(crf.allowed(0, 2));
  CHECK_FALSE(crf.allowed(3, 2));
  CHECK_FALSE(crf.allowed(4, 2));
  CHECK(crf.allowed(1, 2));
  CHECK(crf.allowed(2, 2));
  CHECK(crf.allowed(2, 0));
  CHECK(crf.start_allowed(1));

  // Even with emissions that favour I-X everywhere, decoding stays valid.
  Matrix e = Matrix::Zero(4, 5);
  e.col(2).setConstant(10.0);
  CHECK(ValidBio(CrfViterbi(crf, e).path));
  for (uint64_t seed = 0; seed < 50; ++seed) {
    CrfParams r = RandomCrf(5, seed);
    ApplyBioMask(r, kBioTags);
    CHECK(ValidBio(CrfViterbi(r, RandomEmissions(6, 5, seed + 7)).path));
  }
}

}  // TEST_SUITE
