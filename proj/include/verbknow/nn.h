#ifndef VERBKNOW_NN_H_
#define VERBKNOW_NN_H_

// Dense building blocks with explicit forward caches and backward passes.
// Activations are row-per-position matrices (n x width).

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace verbknow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class ParamGroup { kEncoder, kVerbAdapter, kTaskAdapter, kHead };
std::string ParamGroupName(ParamGroup g);

struct Param {
  std::string name;
  ParamGroup group = ParamGroup::kEncoder;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, ParamGroup g, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), group(g), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  void ZeroGrad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

// Which parameter groups receive updates.
struct FreezeFlags {
  bool encoder = false;
  bool verb_adapter = false;
  bool task_adapter = false;
  bool heads = false;

  bool Frozen(ParamGroup g) const;
  bool Trainable(ParamGroup g) const { return !Frozen(g); }
  bool operator==(const FreezeFlags&) const = default;
};

void InitNormal(Matrix& m, double stddev, std::mt19937_64& rng);

// Exact GeLU: x * Phi(x).
double Gelu(double x);
double GeluGrad(double x);
Matrix Gelu(const Matrix& x);
Matrix GeluBackward(const Matrix& x, const Matrix& dy);

// Row-wise softmax / log-sum-exp.
Matrix SoftmaxRows(const Matrix& logits);
double LogSumExp(const Eigen::Ref<const RowVector>& v);

struct Linear {
  Param weight;  // in x out
  Param bias;    // 1 x out

  Linear() = default;
  Linear(const std::string& name, ParamGroup group, Eigen::Index in, Eigen::Index out);

  Matrix Forward(const Matrix& x) const;
  // Accumulates weight/bias grads when `accumulate`; returns dL/dx.
  Matrix Backward(const Matrix& x, const Matrix& dy, bool accumulate);
  std::vector<Param*> Params() { return {&weight, &bias}; }
};

struct LayerNormCache {
  Matrix xhat;
  Vector inv_std;
};

struct LayerNorm {
  Param gamma;  // 1 x h
  Param beta;   // 1 x h
  double eps = 1e-12;

  LayerNorm() = default;
  LayerNorm(const std::string& name, ParamGroup group, Eigen::Index h, double eps);

  Matrix Forward(const Matrix& x, LayerNormCache* cache) const;
  Matrix Backward(const LayerNormCache& cache, const Matrix& dy, bool accumulate);
  std::vector<Param*> Params() { return {&gamma, &beta}; }
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  // Applies one update to every param using its grad; state keyed by name.
  void Step(const std::vector<Param*>& params);
  const AdamConfig& config() const { return cfg_; }
  long steps() const { return step_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  AdamConfig cfg_;
  long step_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

void ZeroGrads(const std::vector<Param*>& params);
double GradNorm(const std::vector<Param*>& params);
Eigen::Index CountParams(const std::vector<Param*>& params);

}  // namespace verbknow

#endif  // VERBKNOW_NN_H_
