#include "bnnk/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bnnk {

namespace {

constexpr double kPi = std::numbers::pi;

void require_same_dim(const Vec& x, const Vec& x_p, const char* who) {
  if (x.size() != x_p.size())
    throw std::invalid_argument(std::string(who) + ": input dimension mismatch (" +
                                std::to_string(x.size()) + " vs " + std::to_string(x_p.size()) + ")");
}

double scalar_of(const Vec& x, const char* who) {
  if (x.size() != 1)
    throw std::invalid_argument(std::string(who) + ": expects 1-D input, got dimension " +
                                std::to_string(x.size()));
  return x(0);
}

// sin(w) + (pi - w) cos(w) for w = acos(c), clamped against rounding.
double arccos_bracket(double c) {
  c = std::clamp(c, -1.0, 1.0);
  const double w = std::acos(c);
  return std::sin(w) + (kPi - w) * c;
}

}  // namespace

void SEParams::validate() const {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("SEParams: sigma2 must be positive");
  if (!(length_scale > 0.0)) throw std::invalid_argument("SEParams: length_scale must be positive");
}

void ESSParams::validate() const {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("ESSParams: sigma2 must be positive");
  if (!(length_scale > 0.0)) throw std::invalid_argument("ESSParams: length_scale must be positive");
  if (!(period > 0.0)) throw std::invalid_argument("ESSParams: period must be positive");
}

void PriorSpec::validate() const {
  if (!(sigma2_w1 >= 0.0) || !(sigma2_b1 >= 0.0))
    throw std::invalid_argument("PriorSpec: first-layer variances must be >= 0");
  if (!(sigma2_w2 > 0.0)) throw std::invalid_argument("PriorSpec: sigma2_w2 must be positive");
}

double PriorSpec::preact_cov(const Vec& a, const Vec& b) const {
  return sigma2_b1 + sigma2_w1 * a.dot(b);
}

nlohmann::json PriorSpec::to_json() const {
  return {{"sigma2_w1", sigma2_w1}, {"sigma2_b1", sigma2_b1}, {"sigma2_w2", sigma2_w2}};
}

PriorSpec PriorSpec::from_json(const nlohmann::json& j) {
  PriorSpec p;
  p.sigma2_w1 = j.value("sigma2_w1", p.sigma2_w1);
  p.sigma2_b1 = j.value("sigma2_b1", p.sigma2_b1);
  p.sigma2_w2 = j.value("sigma2_w2", p.sigma2_w2);
  p.validate();
  return p;
}

void RBFLayerParams::validate() const {
  if (!(sigma2_g > 0.0)) throw std::invalid_argument("RBFLayerParams: sigma2_g must be positive");
  if (!(sigma2_u > 0.0)) throw std::invalid_argument("RBFLayerParams: sigma2_u must be positive");
}

double k_se(const Vec& x, const Vec& x_p, const SEParams& params) {
  params.validate();
  require_same_dim(x, x_p, "k_se");
  const double l2 = params.length_scale * params.length_scale;
  return params.sigma2 * std::exp(-(x - x_p).squaredNorm() / l2);
}

double k_ess(double x, double x_p, const ESSParams& params) {
  params.validate();
  const double s = std::sin(kPi * (x - x_p) / params.period);
  const double l2 = params.length_scale * params.length_scale;
  return params.sigma2 * std::exp(-2.0 * s * s / l2);
}

double k_relu(const Vec& x, const Vec& x_p, const PriorSpec& priors) {
  priors.validate();
  require_same_dim(x, x_p, "k_relu");
  const double sxx = priors.preact_cov(x, x);
  const double spp = priors.preact_cov(x_p, x_p);
  if (!(sxx > 0.0) || !(spp > 0.0)) {
    const bool first = !(sxx > 0.0);
    throw std::domain_error(std::string("k_relu: degenerate input ") + (first ? "x" : "x_p") +
                            " (zero pre-activation variance; sigma2_b1 = 0 and input is the zero vector)");
  }
  const double norm = std::sqrt(sxx * spp);
  return priors.sigma2_w2 / (2.0 * kPi) * norm * arccos_bracket(priors.preact_cov(x, x_p) / norm);
}

double k_erf(const Vec& x, const Vec& x_p, const PriorSpec& priors) {
  priors.validate();
  require_same_dim(x, x_p, "k_erf");
  const double sxx = priors.preact_cov(x, x);
  const double spp = priors.preact_cov(x_p, x_p);
  const double arg = 2.0 * priors.preact_cov(x, x_p) / std::sqrt((1.0 + 2.0 * sxx) * (1.0 + 2.0 * spp));
  return 2.0 * priors.sigma2_w2 / kPi * std::asin(std::clamp(arg, -1.0, 1.0));
}

double k_rbf_bnn(const Vec& x, const Vec& x_p, const RBFLayerParams& params) {
  params.validate();
  require_same_dim(x, x_p, "k_rbf_bnn");
  const double d = static_cast<double>(x.size());
  const double m2 = params.sigma2_m();
  const double s2 = params.sigma2_s();
  const double ratio = std::sqrt(params.sigma2_e() / params.sigma2_u);
  return std::pow(ratio, d) * std::exp(-x.squaredNorm() / (2.0 * m2)) *
         std::exp(-(x - x_p).squaredNorm() / (2.0 * s2)) * std::exp(-x_p.squaredNorm() / (2.0 * m2));
}

double k_cos_bnn(const Vec& x, const Vec& x_p, const PriorSpec& priors) {
  priors.validate();
  require_same_dim(x, x_p, "k_cos_bnn");
  const double diff = (x - x_p).squaredNorm();
  const double sum = (x + x_p).squaredNorm();
  // E[cos(w(x+x') + 2b)] = exp(-sigma2_w1 ||x+x'||^2 / 2) exp(-2 sigma2_b1)
  return 0.5 * priors.sigma2_w2 *
         (std::exp(-diff * priors.sigma2_w1 / 2.0) +
          std::exp(-sum * priors.sigma2_w1 / 2.0 - 2.0 * priors.sigma2_b1));
}

double k_relu_periodic(double x, double x_p, double period, const PriorSpec& priors) {
  priors.validate();
  if (!(period > 0.0)) throw std::invalid_argument("k_relu_periodic: period must be positive");
  const double denom = priors.sigma2_b1 + priors.sigma2_w1;
  if (!(denom > 0.0))
    throw std::invalid_argument("k_relu_periodic: sigma2_b1 + sigma2_w1 must be positive");
  const double c = (priors.sigma2_b1 + priors.sigma2_w1 * std::cos(2.0 * kPi * (x - x_p) / period)) / denom;
  return priors.sigma2_w2 / kPi * arccos_bracket(c);
}

double relu_mean(const Vec& x, const PriorSpec& priors) {
  return std::sqrt(std::max(priors.preact_cov(x, x), 0.0) / (2.0 * kPi));
}

// --- MeanFunction ----------------------------------------------------------

MeanFunction MeanFunction::zero() { return MeanFunction{}; }

MeanFunction MeanFunction::constant(double value) {
  MeanFunction m;
  m.kind_ = Kind::Constant;
  m.value_ = value;
  return m;
}

MeanFunction MeanFunction::relu(const PriorSpec& priors) {
  MeanFunction m;
  m.kind_ = Kind::ReLU;
  m.priors_ = priors;
  return m;
}

MeanFunction MeanFunction::custom(std::function<double(const Vec&)> fn) {
  if (!fn) throw std::invalid_argument("MeanFunction::custom: empty callable");
  MeanFunction m;
  m.kind_ = Kind::Custom;
  m.fn_ = std::move(fn);
  return m;
}

double MeanFunction::operator()(const Vec& x) const {
  switch (kind_) {
    case Kind::Zero: return 0.0;
    case Kind::Constant: return value_;
    case Kind::ReLU: return relu_mean(x, priors_);
    case Kind::Custom: return fn_(x);
  }
  return 0.0;
}

nlohmann::json MeanFunction::to_json() const {
  switch (kind_) {
    case Kind::Zero: return {{"type", "zero"}};
    case Kind::Constant: return {{"type", "constant"}, {"value", value_}};
    case Kind::ReLU: return {{"type", "relu"}, {"priors", priors_.to_json()}};
    case Kind::Custom: break;
  }
  throw std::logic_error("MeanFunction: custom mean functions are not serialisable");
}

MeanFunction MeanFunction::from_json(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "zero") return zero();
  if (type == "constant") return constant(j.at("value").get<double>());
  if (type == "relu") return relu(PriorSpec::from_json(j.value("priors", nlohmann::json::object())));
  throw std::invalid_argument("MeanFunction: unknown type '" + type + "'");
}

// --- WarpFn ----------------------------------------------------------------

WarpFn WarpFn::from_spec(const WarpSpec& spec) {
  spec.validate();
  WarpFn w;
  w.fn = [spec](const Vec& x) { return spec.apply(x); };
  w.in_dim = spec.in_dim;
  w.out_dim = spec.out_dim();
  w.spec = spec;
  return w;
}

WarpFn WarpFn::identity(std::size_t dim) {
  WarpFn w;
  w.fn = [](const Vec& x) { return x; };
  w.in_dim = dim;
  w.out_dim = dim;
  return w;
}

// --- Kernel nodes ----------------------------------------------------------

namespace detail {

class KernelNode {
 public:
  virtual ~KernelNode() = default;
  virtual double eval(const Vec& x, const Vec& x_p) const = 0;
  virtual std::optional<std::size_t> input_dim() const { return std::nullopt; }
  virtual std::string type() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

}  // namespace detail

namespace {

using detail::KernelNode;
using NodePtr = std::shared_ptr<const KernelNode>;

class SENode final : public KernelNode {
 public:
  explicit SENode(SEParams p) : p_(p) { p_.validate(); }
  double eval(const Vec& x, const Vec& x_p) const override { return k_se(x, x_p, p_); }
  std::string type() const override { return "se"; }
  nlohmann::json to_json() const override {
    return {{"type", "se"}, {"sigma2", p_.sigma2}, {"length_scale", p_.length_scale}};
  }

 private:
  SEParams p_;
};

class ESSNode final : public KernelNode {
 public:
  explicit ESSNode(ESSParams p) : p_(p) { p_.validate(); }
  double eval(const Vec& x, const Vec& x_p) const override {
    return k_ess(scalar_of(x, "k_ess"), scalar_of(x_p, "k_ess"), p_);
  }
  std::optional<std::size_t> input_dim() const override { return 1; }
  std::string type() const override { return "ess"; }
  nlohmann::json to_json() const override {
    return {{"type", "ess"}, {"sigma2", p_.sigma2}, {"length_scale", p_.length_scale}, {"period", p_.period}};
  }

 private:
  ESSParams p_;
};

// Leaves parameterised by a PriorSpec.
template <double (*F)(const Vec&, const Vec&, const PriorSpec&)>
class PriorNode final : public KernelNode {
 public:
  PriorNode(PriorSpec p, std::string tag) : p_(p), tag_(std::move(tag)) { p_.validate(); }
  double eval(const Vec& x, const Vec& x_p) const override { return F(x, x_p, p_); }
  std::string type() const override { return tag_; }
  nlohmann::json to_json() const override { return {{"type", tag_}, {"priors", p_.to_json()}}; }

 private:
  PriorSpec p_;
  std::string tag_;
};

class RBFNode final : public KernelNode {
 public:
  explicit RBFNode(RBFLayerParams p) : p_(p) { p_.validate(); }
  double eval(const Vec& x, const Vec& x_p) const override { return k_rbf_bnn(x, x_p, p_); }
  std::string type() const override { return "rbf_bnn"; }
  nlohmann::json to_json() const override {
    return {{"type", "rbf_bnn"}, {"sigma2_g", p_.sigma2_g}, {"sigma2_u", p_.sigma2_u}};
  }

 private:
  RBFLayerParams p_;
};

class ReluPeriodicNode final : public KernelNode {
 public:
  ReluPeriodicNode(double period, PriorSpec p) : period_(period), p_(p) {
    p_.validate();
    if (!(period_ > 0.0)) throw std::invalid_argument("relu_periodic: period must be positive");
    if (!(p_.sigma2_b1 + p_.sigma2_w1 > 0.0))
      throw std::invalid_argument("relu_periodic: sigma2_b1 + sigma2_w1 must be positive");
  }
  double eval(const Vec& x, const Vec& x_p) const override {
    return k_relu_periodic(scalar_of(x, "k_relu_periodic"), scalar_of(x_p, "k_relu_periodic"), period_, p_);
  }
  std::optional<std::size_t> input_dim() const override { return 1; }
  std::string type() const override { return "relu_periodic"; }
  nlohmann::json to_json() const override {
    return {{"type", "relu_periodic"}, {"period", period_}, {"priors", p_.to_json()}};
  }

 private:
  double period_;
  PriorSpec p_;
};

class ConstantNode final : public KernelNode {
 public:
  explicit ConstantNode(double c) : c_(c) {
    if (c_ < 0.0) throw std::invalid_argument("constant_kernel: value must be >= 0");
  }
  double eval(const Vec&, const Vec&) const override { return c_; }
  std::string type() const override { return "constant"; }
  nlohmann::json to_json() const override { return {{"type", "constant"}, {"value", c_}}; }

 private:
  double c_;
};

std::optional<std::size_t> merge_dims(const Kernel& a, const Kernel& b, const char* who) {
  const auto da = a.input_dim();
  const auto db = b.input_dim();
  if (da && db && *da != *db)
    throw std::invalid_argument(std::string(who) + ": children accept different input dimensions (" +
                                std::to_string(*da) + " vs " + std::to_string(*db) + ")");
  return da ? da : db;
}

class BinaryNode final : public KernelNode {
 public:
  enum class Op { Add, Mul };
  BinaryNode(Op op, Kernel a, Kernel b)
      : op_(op), a_(std::move(a)), b_(std::move(b)),
        dim_(merge_dims(a_, b_, op == Op::Add ? "kernel_add" : "kernel_mul")) {}
  double eval(const Vec& x, const Vec& x_p) const override {
    return op_ == Op::Add ? a_(x, x_p) + b_(x, x_p) : a_(x, x_p) * b_(x, x_p);
  }
  std::optional<std::size_t> input_dim() const override { return dim_; }
  std::string type() const override { return op_ == Op::Add ? "add" : "mul"; }
  nlohmann::json to_json() const override {
    return {{"type", type()}, {"children", nlohmann::json::array({a_.to_json(), b_.to_json()})}};
  }

 private:
  Op op_;
  Kernel a_, b_;
  std::optional<std::size_t> dim_;
};

class PowNode final : public KernelNode {
 public:
  PowNode(Kernel a, int n) : a_(std::move(a)), n_(n) {
    if (n_ < 1) throw std::invalid_argument("kernel_pow: exponent must be >= 1 (use constant_kernel for n = 0)");
  }
  double eval(const Vec& x, const Vec& x_p) const override {
    const double k = a_(x, x_p);
    double out = k;
    for (int i = 1; i < n_; ++i) out *= k;
    return out;
  }
  std::optional<std::size_t> input_dim() const override { return a_.input_dim(); }
  std::string type() const override { return "pow"; }
  nlohmann::json to_json() const override { return {{"type", "pow"}, {"n", n_}, {"child", a_.to_json()}}; }

 private:
  Kernel a_;
  int n_;
};

class WarpNode final : public KernelNode {
 public:
  WarpNode(Kernel a, WarpFn u) : a_(std::move(a)), u_(std::move(u)) {
    if (!u_.fn) throw std::invalid_argument("kernel_warp: empty warping function");
    if (const auto d = a_.input_dim(); d && *d != u_.out_dim)
      throw std::invalid_argument("kernel_warp: warp output dimension " + std::to_string(u_.out_dim) +
                                  " does not match kernel input dimension " + std::to_string(*d));
  }
  double eval(const Vec& x, const Vec& x_p) const override {
    if (static_cast<std::size_t>(x.size()) != u_.in_dim || static_cast<std::size_t>(x_p.size()) != u_.in_dim)
      throw std::invalid_argument("kernel_warp: expected inputs of dimension " + std::to_string(u_.in_dim));
    return a_(u_.fn(x), u_.fn(x_p));
  }
  std::optional<std::size_t> input_dim() const override { return u_.in_dim; }
  std::string type() const override { return "warp"; }
  nlohmann::json to_json() const override {
    if (!u_.spec) throw std::logic_error("kernel_warp: custom warping functions are not serialisable");
    return {{"type", "warp"}, {"warp", u_.spec->to_json()}, {"child", a_.to_json()}};
  }

 private:
  Kernel a_;
  WarpFn u_;
};

class ProjectNode final : public KernelNode {
 public:
  ProjectNode(Kernel a, std::vector<std::size_t> dims, std::optional<std::size_t> ambient)
      : a_(std::move(a)), dims_(std::move(dims)), ambient_(ambient) {
    if (dims_.empty()) throw std::invalid_argument("kernel_project: empty index subset");
    if (ambient_) {
      for (std::size_t d : dims_)
        if (d >= *ambient_)
          throw std::out_of_range("kernel_project: index " + std::to_string(d) +
                                  " out of range for input dimension " + std::to_string(*ambient_));
    }
    if (const auto d = a_.input_dim(); d && *d != dims_.size())
      throw std::invalid_argument("kernel_project: subset size does not match child input dimension");
  }
  double eval(const Vec& x, const Vec& x_p) const override {
    return a_(select(x), select(x_p));
  }
  std::optional<std::size_t> input_dim() const override { return ambient_; }
  std::string type() const override { return "project"; }
  nlohmann::json to_json() const override {
    nlohmann::json j{{"type", "project"}, {"dims", dims_}, {"child", a_.to_json()}};
    if (ambient_) j["ambient_dim"] = *ambient_;
    return j;
  }

 private:
  Vec select(const Vec& x) const {
    if (ambient_ && static_cast<std::size_t>(x.size()) != *ambient_)
      throw std::invalid_argument("kernel_project: expected input of dimension " + std::to_string(*ambient_));
    Vec out(dims_.size());
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (dims_[i] >= static_cast<std::size_t>(x.size()))
        throw std::out_of_range("kernel_project: index " + std::to_string(dims_[i]) +
                                " out of range for input dimension " + std::to_string(x.size()));
      out(static_cast<Eigen::Index>(i)) = x(static_cast<Eigen::Index>(dims_[i]));
    }
    return out;
  }

  Kernel a_;
  std::vector<std::size_t> dims_;
  std::optional<std::size_t> ambient_;
};

class HiddenAddNode final : public KernelNode {
 public:
  HiddenAddNode(Kernel a, Kernel b, MeanFunction ma, MeanFunction mb, double sigma2_w2)
      : a_(std::move(a)), b_(std::move(b)), ma_(std::move(ma)), mb_(std::move(mb)),
        sigma2_w2_(sigma2_w2), dim_(merge_dims(a_, b_, "hidden_add_kernel")) {
    if (!(sigma2_w2_ > 0.0)) throw std::invalid_argument("hidden_add_kernel: sigma2_w2 must be positive");
  }
  double eval(const Vec& x, const Vec& x_p) const override {
    return a_(x, x_p) + b_(x, x_p) + sigma2_w2_ * (ma_(x) * mb_(x_p) + ma_(x_p) * mb_(x));
  }
  std::optional<std::size_t> input_dim() const override { return dim_; }
  std::string type() const override { return "hidden_add"; }
  nlohmann::json to_json() const override {
    return {{"type", "hidden_add"},
            {"children", nlohmann::json::array({a_.to_json(), b_.to_json()})},
            {"means", nlohmann::json::array({ma_.to_json(), mb_.to_json()})},
            {"sigma2_w2", sigma2_w2_}};
  }

 private:
  Kernel a_, b_;
  MeanFunction ma_, mb_;
  double sigma2_w2_;
  std::optional<std::size_t> dim_;
};

}  // namespace

// --- Kernel handle ---------------------------------------------------------

Kernel::Kernel(std::shared_ptr<const detail::KernelNode> node) : node_(std::move(node)) {
  if (!node_) throw std::invalid_argument("Kernel: null node");
}

double Kernel::operator()(const Vec& x, const Vec& x_p) const { return node_->eval(x, x_p); }
std::optional<std::size_t> Kernel::input_dim() const { return node_->input_dim(); }
std::string Kernel::type() const { return node_->type(); }
nlohmann::json Kernel::to_json() const { return node_->to_json(); }

Mat Kernel::gram(const std::vector<Vec>& X) const {
  const auto n = static_cast<Eigen::Index>(X.size());
  Mat K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = (*this)(X[i], X[i]);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      K(i, j) = (*this)(X[i], X[j]);
      K(j, i) = K(i, j);
    }
  }
  return K;
}

Mat Kernel::cross(const std::vector<Vec>& A, const std::vector<Vec>& B) const {
  Mat K(static_cast<Eigen::Index>(A.size()), static_cast<Eigen::Index>(B.size()));
  for (std::size_t i = 0; i < A.size(); ++i)
    for (std::size_t j = 0; j < B.size(); ++j)
      K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*this)(A[i], B[j]);
  return K;
}

Kernel se_kernel(const SEParams& params) { return Kernel(std::make_shared<SENode>(params)); }
Kernel ess_kernel(const ESSParams& params) { return Kernel(std::make_shared<ESSNode>(params)); }
Kernel relu_kernel(const PriorSpec& priors) { return Kernel(std::make_shared<PriorNode<k_relu>>(priors, "relu")); }
Kernel erf_kernel(const PriorSpec& priors) { return Kernel(std::make_shared<PriorNode<k_erf>>(priors, "erf")); }
Kernel cos_bnn_kernel(const PriorSpec& priors) {
  return Kernel(std::make_shared<PriorNode<k_cos_bnn>>(priors, "cos_bnn"));
}
Kernel rbf_bnn_kernel(const RBFLayerParams& params) { return Kernel(std::make_shared<RBFNode>(params)); }
Kernel relu_periodic_kernel(double period, const PriorSpec& priors) {
  return Kernel(std::make_shared<ReluPeriodicNode>(period, priors));
}
Kernel constant_kernel(double value) { return Kernel(std::make_shared<ConstantNode>(value)); }
Kernel zero_kernel() { return constant_kernel(0.0); }

Kernel kernel_add(const Kernel& a, const Kernel& b) {
  return Kernel(std::make_shared<BinaryNode>(BinaryNode::Op::Add, a, b));
}
Kernel kernel_mul(const Kernel& a, const Kernel& b) {
  return Kernel(std::make_shared<BinaryNode>(BinaryNode::Op::Mul, a, b));
}
Kernel kernel_scale(const Kernel& a, double factor) { return kernel_mul(constant_kernel(factor), a); }
Kernel kernel_pow(const Kernel& a, int n) { return Kernel(std::make_shared<PowNode>(a, n)); }
Kernel kernel_warp(const Kernel& a, const WarpFn& u) { return Kernel(std::make_shared<WarpNode>(a, u)); }
Kernel kernel_warp(const Kernel& a, const WarpSpec& u) { return kernel_warp(a, WarpFn::from_spec(u)); }
Kernel kernel_project(const Kernel& a, std::vector<std::size_t> dims, std::optional<std::size_t> ambient_dim) {
  return Kernel(std::make_shared<ProjectNode>(a, std::move(dims), ambient_dim));
}
Kernel hidden_add_kernel(const Kernel& a, const Kernel& b, MeanFunction m_a, MeanFunction m_b, double sigma2_w2) {
  return Kernel(std::make_shared<HiddenAddNode>(a, b, std::move(m_a), std::move(m_b), sigma2_w2));
}

}  // namespace bnnk
