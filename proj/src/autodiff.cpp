#include "capra/autodiff.hpp"

#include "capra/numerics.hpp"

#include <cmath>
#include <stdexcept>

namespace capra {

namespace {

void check_same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::invalid_argument(std::string(op) + ": operands on different tapes");
  }
}

void check_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

const Mat& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Mat& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw std::invalid_argument("Var::scalar: value is not 1x1");
  }
  return v(0, 0);
}

Var Tape::constant(Mat value) {
  return Var{this, add_node(std::move(value), nullptr)};
}

Var Tape::parameter(const std::string& name, const Mat& value) {
  auto it = param_ids_.find(name);
  if (it != param_ids_.end()) return Var{this, it->second};
  const int id = add_node(value, nullptr);
  param_ids_.emplace(name, id);
  return Var{this, id};
}

std::map<std::string, Var> Tape::parameters(const ParamMap& params) {
  std::map<std::string, Var> out;
  for (const auto& [name, value] : params) out.emplace(name, parameter(name, value));
  return out;
}

int Tape::add_node(Mat value, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), std::move(backward)});
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int id, const Mat& g) {
  Mat& slot = grads_[id];
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

ParamMap Tape::gradients(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("gradients: loss from another tape");
  const Mat& lv = value(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("gradients: loss must be scalar");
  }
  if (!std::isfinite(lv(0, 0))) {
    throw std::runtime_error("gradients: loss is not finite");
  }
  grads_.assign(nodes_.size(), Mat());
  grads_[loss.id] = Mat::Ones(1, 1);
  // Parents always precede children, so one descending pass suffices.
  for (int i = loss.id; i >= 0; --i) {
    if (grads_[i].size() != 0 && nodes_[i].backward) nodes_[i].backward(*this, i);
  }
  ParamMap out;
  for (const auto& [name, id] : param_ids_) {
    if (grads_[id].size() != 0) {
      out.emplace(name, grads_[id]);
    } else {
      out.emplace(name, Mat::Zero(nodes_[id].value.rows(), nodes_[id].value.cols()));
    }
  }
  return out;
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Tape& t = *a.tape;
  Mat v = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  const int id = t.add_node(std::move(v), [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.accumulate(ia, g * t.value(ib).transpose());
    t.accumulate(ib, t.value(ia).transpose() * g);
  });
  return Var{&t, id};
}

Var add(Var a, Var b) {
  check_same_tape(a, b, "add");
  check_same_shape(a, b, "add");
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id;
  const int id = t.add_node(a.value() + b.value(), [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
  return Var{&t, id};
}

Var sub(Var a, Var b) {
  check_same_tape(a, b, "sub");
  check_same_shape(a, b, "sub");
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id;
  const int id = t.add_node(a.value() - b.value(), [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
  return Var{&t, id};
}

Var mul(Var a, Var b) {
  check_same_tape(a, b, "mul");
  check_same_shape(a, b, "mul");
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id;
  const int id = t.add_node(a.value().cwiseProduct(b.value()), [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
  return Var{&t, id};
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  const int ia = a.id;
  const int id = t.add_node(a.value() * c, [ia, c](Tape& t, int self) {
    t.accumulate(ia, t.grad(self) * c);
  });
  return Var{&t, id};
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Mat v = a.value().unaryExpr([](double x) { return sigmoid_scalar(x); });
  const int ia = a.id;
  const int id = t.add_node(std::move(v), [ia](Tape& t, int self) {
    const Mat& s = t.value(self);
    t.accumulate(ia, t.grad(self).cwiseProduct(s.cwiseProduct(Mat::Ones(s.rows(), s.cols()) - s)));
  });
  return Var{&t, id};
}

Var tanh(Var a) {
  Tape& t = *a.tape;
  Mat v = a.value().array().tanh();
  const int ia = a.id;
  const int id = t.add_node(std::move(v), [ia](Tape& t, int self) {
    const Mat& th = t.value(self);
    Mat d = (1.0 - th.array().square()).matrix();
    t.accumulate(ia, t.grad(self).cwiseProduct(d));
  });
  return Var{&t, id};
}

Var exp(Var a) {
  Tape& t = *a.tape;
  Mat v = a.value().array().exp();
  const int ia = a.id;
  const int id = t.add_node(std::move(v), [ia](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
  });
  return Var{&t, id};
}

Var log(Var a) {
  Tape& t = *a.tape;
  Mat v = a.value().array().log();
  const int ia = a.id;
  const int id = t.add_node(std::move(v), [ia](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).cwiseQuotient(t.value(ia)));
  });
  return Var{&t, id};
}

Var sum(Var a) {
  Tape& t = *a.tape;
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  const int ia = a.id;
  const int id = t.add_node(std::move(v), [ia](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    const Mat& av = t.value(ia);
    t.accumulate(ia, Mat::Constant(av.rows(), av.cols(), g));
  });
  return Var{&t, id};
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Tape& t = *parts[0].tape;
  Eigen::Index total = 0;
  const Eigen::Index c = parts[0].cols();
  for (const Var& p : parts) {
    if (p.tape != &t) throw std::invalid_argument("concat_rows: mixed tapes");
    if (p.cols() != c) throw std::invalid_argument("concat_rows: column mismatch");
    total += p.rows();
  }
  Mat v(total, c);
  std::vector<int> ids;
  std::vector<Eigen::Index> sizes;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id);
    sizes.push_back(p.rows());
    off += p.rows();
  }
  const int id = t.add_node(std::move(v), [ids, sizes](Tape& t, int self) {
    const Mat& g = t.grad(self);
    Eigen::Index off = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      t.accumulate(ids[i], g.middleRows(off, sizes[i]));
      off += sizes[i];
    }
  });
  return Var{&t, id};
}

Var rows(Var a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::invalid_argument("rows: slice out of range");
  }
  Tape& t = *a.tape;
  Mat v = a.value().middleRows(start, count);
  const int ia = a.id;
  const int id = t.add_node(std::move(v), [ia, start, count](Tape& t, int self) {
    const Mat& av = t.value(ia);
    Mat g = Mat::Zero(av.rows(), av.cols());
    g.middleRows(start, count) = t.grad(self);
    t.accumulate(ia, g);
  });
  return Var{&t, id};
}

Var column(Var m, int j) {
  if (j < 0 || j >= m.cols()) throw std::invalid_argument("column: index out of range");
  Tape& t = *m.tape;
  Mat v = m.value().col(j);
  const int im = m.id;
  const int id = t.add_node(std::move(v), [im, j](Tape& t, int self) {
    const Mat& mv = t.value(im);
    Mat g = Mat::Zero(mv.rows(), mv.cols());
    g.col(j) = t.grad(self);
    t.accumulate(im, g);
  });
  return Var{&t, id};
}

Var softmax(Var logits) {
  if (logits.cols() != 1 || logits.rows() == 0) {
    throw std::invalid_argument("softmax: expects a nonempty column vector");
  }
  Tape& t = *logits.tape;
  Vec p = capra::softmax(Vec(logits.value()));
  const int il = logits.id;
  const int id = t.add_node(Mat(p), [il](Tape& t, int self) {
    const Mat& p = t.value(self);
    const Mat& g = t.grad(self);
    const double dot = (p.array() * g.array()).sum();
    t.accumulate(il, (p.array() * (g.array() - dot)).matrix());
  });
  return Var{&t, id};
}

Var softmax_cross_entropy(Var logits, int target) {
  if (logits.cols() != 1) throw std::invalid_argument("softmax_cross_entropy: column vector expected");
  if (target < 0 || target >= logits.rows()) {
    throw std::invalid_argument("softmax_cross_entropy: target out of range");
  }
  Tape& t = *logits.tape;
  const Vec x = logits.value();
  Mat v(1, 1);
  v(0, 0) = log_sum_exp(x) - x(target);
  const Vec p = capra::softmax(x);
  const int il = logits.id;
  const int id = t.add_node(std::move(v), [il, target, p](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    Vec d = p;
    d(target) -= 1.0;
    t.accumulate(il, Mat(d * g));
  });
  return Var{&t, id};
}

Var softmax_cross_entropy(Var logits, const Vec& soft_target) {
  if (logits.cols() != 1 || logits.rows() != soft_target.size()) {
    throw std::invalid_argument("softmax_cross_entropy: target size mismatch");
  }
  Tape& t = *logits.tape;
  const Vec x = logits.value();
  Mat v(1, 1);
  v(0, 0) = log_sum_exp(x) - soft_target.dot(x);
  const Vec p = capra::softmax(x);
  const int il = logits.id;
  const Vec tgt = soft_target;
  const int id = t.add_node(std::move(v), [il, p, tgt](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    t.accumulate(il, Mat((p - tgt) * g));
  });
  return Var{&t, id};
}

double loss_value(const LossBuilder& f, const ParamMap& params) {
  Tape tape;
  auto vars = tape.parameters(params);
  return f(tape, vars).scalar();
}

ParamMap loss_gradients(const LossBuilder& f, const ParamMap& params) {
  Tape tape;
  auto vars = tape.parameters(params);
  Var loss = f(tape, vars);
  return tape.gradients(loss);
}

double finite_diff_error(const std::function<double(const ParamMap&)>& f,
                         const ParamMap& params, const ParamMap& analytic,
                         double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_error: h must be positive");
  const double base1 = f(params);
  const double base2 = f(params);
  if (base1 != base2) throw std::runtime_error("finite_diff_error: f is not deterministic");

  ParamMap work = params;
  double worst = 0.0;
  for (auto& [name, mat] : work) {
    const auto ait = analytic.find(name);
    if (ait == analytic.end()) throw std::invalid_argument("finite_diff_error: missing analytic gradient for " + name);
    const Mat& a = ait->second;
    for (Eigen::Index j = 0; j < mat.cols(); ++j) {
      for (Eigen::Index i = 0; i < mat.rows(); ++i) {
        const double orig = mat(i, j);
        mat(i, j) = orig + h;
        const double fp = f(work);
        mat(i, j) = orig - h;
        const double fm = f(work);
        mat(i, j) = orig;
        const double d = (fp - fm) / (2.0 * h);
        const double g = a(i, j);
        const double denom = std::max({std::abs(g), std::abs(d), 1e-12});
        worst = std::max(worst, std::abs(g - d) / denom);
      }
    }
  }
  return worst;
}

double finite_diff_check(const LossBuilder& f, const ParamMap& params, double h) {
  const ParamMap analytic = loss_gradients(f, params);
  return finite_diff_error([&f](const ParamMap& p) { return loss_value(f, p); },
                           params, analytic, h);
}

}  // namespace capra
