#pragma once

#include "capra/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace capra {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  double scalar() const;  // requires a 1x1 value
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

// Record of primitive operations applied to tracked matrices, replayed in
// exact reverse creation order for gradient accumulation. Single-owner;
// independent tapes may run concurrently over shared read-only parameters.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Var constant(Mat value);
  Var parameter(const std::string& name, const Mat& value);
  std::map<std::string, Var> parameters(const ParamMap& params);

  // Reverse-mode gradients of a scalar loss. Every registered parameter
  // appears in the result; parameters the loss never touched map to zero
  // matrices. Rejects non-scalar and non-finite losses.
  ParamMap gradients(Var loss);

  int add_node(Mat value, BackwardFn backward);
  const Mat& value(int id) const { return nodes_[id].value; }
  const Mat& grad(int id) const { return grads_[id]; }
  void accumulate(int id, const Mat& g);
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat value;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<Mat> grads_;
  std::map<std::string, int> param_ids_;
};

// Primitives. All take column-major dense values; vectors are n x 1.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double c);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var sum(Var a);  // 1x1
Var concat_rows(const std::vector<Var>& parts);
Var rows(Var a, int start, int count);
Var column(Var m, int j);  // embedding lookup: j-th column of a matrix
Var softmax(Var logits);   // column vector in, probability vector out
Var softmax_cross_entropy(Var logits, int target);
Var softmax_cross_entropy(Var logits, const Vec& soft_target);

// Builds a scalar loss from tracked parameters; the graph may differ per
// call only through the parameter values.
using LossBuilder = std::function<Var(Tape&, const std::map<std::string, Var>&)>;

double loss_value(const LossBuilder& f, const ParamMap& params);
ParamMap loss_gradients(const LossBuilder& f, const ParamMap& params);

// Max over parameter coordinates of
//   |analytic - central_difference| / max(|analytic|, |difference|, 1e-12).
// Evaluates f twice at the base point and rejects nondeterministic f.
double finite_diff_error(const std::function<double(const ParamMap&)>& f,
                         const ParamMap& params, const ParamMap& analytic,
                         double h);

// Same check with the analytic side taken from the tape.
double finite_diff_check(const LossBuilder& f, const ParamMap& params, double h);

}  // namespace capra
