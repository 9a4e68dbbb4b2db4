#ifndef VERBKNOW_CRF_H_
#define VERBKNOW_CRF_H_

// Linear-chain CRF over precomputed emission scores (n x tags).

#include <string>
#include <vector>

#include "verbknow/nn.h"

namespace verbknow {

struct CrfParams {
  Param transitions;  // tags x tags, [from, to]
  Param start;        // 1 x tags
  Param end;          // 1 x tags
  // Structural mask; disallowed entries score -inf regardless of params.
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> allowed;
  Eigen::Array<bool, 1, Eigen::Dynamic> start_allowed;

  CrfParams() = default;
  CrfParams(const std::string& name, ParamGroup group, int num_tags);

  int num_tags() const { return static_cast<int>(start.value.cols()); }
  double Trans(int from, int to) const;
  double Start(int tag) const;
  double End(int tag) const;
  std::vector<Param*> Params() { return {&transitions, &start, &end}; }
};

// Sum of start, emission, transition and end scores along `path`.
double CrfScore(const CrfParams& crf, const Matrix& emissions, const std::vector<int>& path);

// log Z via the forward recursion.
double CrfLogPartition(const CrfParams& crf, const Matrix& emissions);
// log Z via the backward recursion.
double CrfLogPartitionBackward(const CrfParams& crf, const Matrix& emissions);

double CrfLogLikelihood(const CrfParams& crf, const Matrix& emissions,
                        const std::vector<int>& path);

// Gradient of `scale` times the negative log-likelihood. Adds into crf param
// grads when `accumulate`, and returns the emission gradient.
Matrix CrfNllBackward(CrfParams& crf, const Matrix& emissions, const std::vector<int>& path,
                      bool accumulate, double scale = 1.0);

// Per-position tag marginals p(y_t = j | x).
Matrix CrfMarginals(const CrfParams& crf, const Matrix& emissions);

struct ViterbiResult {
  std::vector<int> path;
  double score = 0.0;
};

// Highest-scoring path; among equal scores, the lexicographically smallest.
ViterbiResult CrfViterbi(const CrfParams& crf, const Matrix& emissions);

// Masks I-X after O, after B-Y/I-Y (Y != X), and at sequence start.
void ApplyBioMask(CrfParams& crf, const std::vector<std::string>& tags);

}  // namespace verbknow

#endif  // VERBKNOW_CRF_H_
