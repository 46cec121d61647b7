#include "bnnk/arch.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bnnk {

using nlohmann::json;

// --- Activation ------------------------------------------------------------

Activation Activation::leaky_relu(double slope) {
  Activation a{ActivationKind::LeakyReLU};
  a.slope = slope;
  a.validate();
  return a;
}

Activation Activation::rbf(double sigma2_g) {
  Activation a{ActivationKind::RBF};
  a.sigma2_g = sigma2_g;
  a.validate();
  return a;
}

void Activation::validate() const {
  if (kind == ActivationKind::LeakyReLU && !(slope > 0.0 && slope < 1.0))
    throw std::invalid_argument("Activation: leaky ReLU slope must lie in (0, 1)");
  if (kind == ActivationKind::RBF && !(sigma2_g > 0.0))
    throw std::invalid_argument("Activation: RBF sigma2_g must be positive");
}

std::string Activation::name() const {
  switch (kind) {
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::LeakyReLU: return "leaky_relu";
    case ActivationKind::ERF: return "erf";
    case ActivationKind::TanH: return "tanh";
    case ActivationKind::Cosine: return "cosine";
    case ActivationKind::RBF: return "rbf";
  }
  return "?";
}

double Activation::operator()(double a) const {
  switch (kind) {
    case ActivationKind::ReLU: return a > 0.0 ? a : 0.0;
    case ActivationKind::LeakyReLU: return a > 0.0 ? a : slope * a;
    case ActivationKind::ERF: return std::erf(a);
    case ActivationKind::TanH: return std::tanh(a);
    case ActivationKind::Cosine: return std::cos(a);
    case ActivationKind::RBF: break;
  }
  throw std::logic_error("Activation: RBF units are not pointwise");
}

double Activation::derivative(double a) const {
  switch (kind) {
    case ActivationKind::ReLU: return a > 0.0 ? 1.0 : 0.0;
    case ActivationKind::LeakyReLU: return a > 0.0 ? 1.0 : slope;
    case ActivationKind::ERF: return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-a * a);
    case ActivationKind::TanH: {
      const double t = std::tanh(a);
      return 1.0 - t * t;
    }
    case ActivationKind::Cosine: return -std::sin(a);
    case ActivationKind::RBF: break;
  }
  throw std::logic_error("Activation: RBF units are not pointwise");
}

json Activation::to_json() const {
  json j{{"type", name()}};
  if (kind == ActivationKind::LeakyReLU) j["slope"] = slope;
  if (kind == ActivationKind::RBF) j["sigma2_g"] = sigma2_g;
  return j;
}

Activation Activation::from_json(const json& j) {
  const std::string type = j.is_string() ? j.get<std::string>() : j.at("type").get<std::string>();
  Activation a;
  if (type == "relu") a.kind = ActivationKind::ReLU;
  else if (type == "leaky_relu") a.kind = ActivationKind::LeakyReLU;
  else if (type == "erf") a.kind = ActivationKind::ERF;
  else if (type == "tanh") a.kind = ActivationKind::TanH;
  else if (type == "cosine" || type == "cos") a.kind = ActivationKind::Cosine;
  else if (type == "rbf") a.kind = ActivationKind::RBF;
  else throw std::invalid_argument("unknown activation '" + type + "'");
  if (j.is_object()) {
    a.slope = j.value("slope", a.slope);
    a.sigma2_g = j.value("sigma2_g", a.sigma2_g);
  }
  a.validate();
  return a;
}

// --- ArchSpec ----------------------------------------------------------------

std::string to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Basic: return "basic";
    case NodeKind::Deep: return "deep";
    case NodeKind::OutputSum: return "output_sum";
    case NodeKind::OutputProduct: return "output_product";
    case NodeKind::HiddenMul: return "hidden_mul";
    case NodeKind::HiddenAdd: return "hidden_add";
  }
  return "?";
}

bool ArchSpec::is_feature() const { return !is_output_combinator(); }

std::size_t ArchSpec::hidden_width() const {
  switch (kind) {
    case NodeKind::Basic: return width;
    case NodeKind::Deep: return layers.empty() ? 0 : layers.back().width;
    case NodeKind::HiddenMul:
    case NodeKind::HiddenAdd: return children.empty() ? 0 : children.front().hidden_width();
    default: break;
  }
  throw std::logic_error("ArchSpec: output combinators have no hidden width");
}

double ArchSpec::output_variance() const { return kind == NodeKind::Basic ? priors.sigma2_w2 : sigma2_w2; }

std::vector<LayerSpec> ArchSpec::feature_layers() const {
  if (kind == NodeKind::Basic) return {LayerSpec{activation, width, priors.sigma2_w1, priors.sigma2_b1}};
  if (kind == NodeKind::Deep) return layers;
  throw std::logic_error("ArchSpec: feature_layers() needs a Basic or Deep node");
}

std::size_t ArchSpec::transformed_dim() const {
  const std::size_t selected = input_dims.empty() ? input_dim : input_dims.size();
  return warp ? warp->out_dim() : selected;
}

bool ArchSpec::single_layer() const {
  switch (kind) {
    case NodeKind::Basic: return true;
    case NodeKind::Deep: return layers.size() == 1;
    default: break;
  }
  for (const auto& c : children)
    if (!c.single_layer()) return false;
  return true;
}

namespace {

void validate_node(const ArchSpec& a, bool has_output, const std::string& path) {
  auto fail = [&](const std::string& msg) { throw std::invalid_argument("arch " + path + ": " + msg); };
  if (a.input_dim == 0) fail("input_dim must be >= 1");
  if (has_output && a.n_outputs == 0) fail("n_outputs must be >= 1");
  if (a.sigma2_b_out < 0.0) fail("sigma2_b_out must be >= 0");

  switch (a.kind) {
    case NodeKind::Basic:
    case NodeKind::Deep: {
      for (std::size_t d : a.input_dims)
        if (d >= a.input_dim)
          fail("input dim index " + std::to_string(d) + " out of range for input dimension " +
               std::to_string(a.input_dim));
      if (a.warp) {
        a.warp->validate();
        const std::size_t selected = a.input_dims.empty() ? a.input_dim : a.input_dims.size();
        if (a.warp->in_dim != selected)
          fail("warp expects " + std::to_string(a.warp->in_dim) + " inputs but " + std::to_string(selected) +
               " are selected");
      }
      if (a.kind == NodeKind::Basic) {
        a.activation.validate();
        if (a.width < 1) fail("width must be >= 1");
        try {
          a.priors.validate();
        } catch (const std::invalid_argument& e) {
          fail(e.what());
        }
      } else {
        if (a.layers.empty()) fail("deep node needs at least one layer");
        for (const auto& l : a.layers) {
          l.activation.validate();
          if (l.width < 1) fail("layer width must be >= 1");
          if (l.sigma2_w < 0.0 || l.sigma2_b < 0.0) fail("layer variances must be >= 0");
        }
        if (has_output && !(a.sigma2_w2 > 0.0)) fail("sigma2_w2 must be positive");
      }
      break;
    }
    case NodeKind::HiddenMul:
    case NodeKind::HiddenAdd: {
      if (a.children.empty()) fail("hidden combinator needs at least one child");
      if (has_output && !(a.sigma2_w2 > 0.0)) fail("sigma2_w2 must be positive");
      const std::size_t w = a.children.front().is_feature() ? a.children.front().hidden_width() : 0;
      for (std::size_t i = 0; i < a.children.size(); ++i) {
        const auto& c = a.children[i];
        const std::string cp = path + "/" + std::to_string(i);
        if (!c.is_feature()) fail("child " + std::to_string(i) + " must be a feature node, not " + to_string(c.kind));
        if (c.input_dim != a.input_dim) fail("child " + std::to_string(i) + " has a different input dimension");
        validate_node(c, false, cp);
        if (c.hidden_width() != w) fail("children of hidden combinators must have equal width");
      }
      break;
    }
    case NodeKind::OutputSum:
    case NodeKind::OutputProduct: {
      if (a.children.empty()) fail("output combinator needs at least one child");
      for (std::size_t i = 0; i < a.children.size(); ++i) {
        const auto& c = a.children[i];
        if (c.input_dim != a.input_dim) fail("child " + std::to_string(i) + " has a different input dimension");
        if (c.n_outputs != a.n_outputs) fail("child " + std::to_string(i) + " has a different output count");
        validate_node(c, true, path + "/" + std::to_string(i));
      }
      break;
    }
  }
}

}  // namespace

void ArchSpec::validate() const { validate_node(*this, true, "root"); }

json ArchSpec::to_json() const {
  json j{{"type", to_string(kind)}, {"input_dim", input_dim}};
  if (!input_dims.empty()) j["input_dims"] = input_dims;
  if (warp) j["warp"] = warp->to_json();
  switch (kind) {
    case NodeKind::Basic:
      j["activation"] = activation.to_json();
      j["priors"] = priors.to_json();
      j["width"] = width;
      break;
    case NodeKind::Deep: {
      json ls = json::array();
      for (const auto& l : layers)
        ls.push_back({{"activation", l.activation.to_json()},
                      {"width", l.width},
                      {"sigma2_w", l.sigma2_w},
                      {"sigma2_b", l.sigma2_b}});
      j["layers"] = ls;
      j["sigma2_w2"] = sigma2_w2;
      break;
    }
    case NodeKind::HiddenMul:
    case NodeKind::HiddenAdd: j["sigma2_w2"] = sigma2_w2; [[fallthrough]];
    default: {
      json cs = json::array();
      for (const auto& c : children) cs.push_back(c.to_json());
      j["children"] = cs;
    }
  }
  if (sigma2_b_out > 0.0) j["sigma2_b_out"] = sigma2_b_out;
  if (n_outputs != 1) j["n_outputs"] = n_outputs;
  return j;
}

namespace {

ArchSpec parse_arch(const json& j, std::size_t inherited_input_dim) {
  if (!j.is_object()) throw std::invalid_argument("architecture config must be a JSON object");
  if (j.contains("schema_version") && j.at("schema_version").get<int>() != 1)
    throw std::invalid_argument("architecture config: unsupported schema_version");
  ArchSpec a;
  const auto type = j.at("type").get<std::string>();
  a.input_dim = j.value("input_dim", inherited_input_dim);
  a.input_dims = j.value("input_dims", std::vector<std::size_t>{});
  if (j.contains("warp")) {
    auto w = j.at("warp");
    if (!w.contains("in_dim")) w["in_dim"] = a.input_dims.empty() ? a.input_dim : a.input_dims.size();
    a.warp = WarpSpec::from_json(w);
  }
  a.sigma2_b_out = j.value("sigma2_b_out", 0.0);
  a.n_outputs = j.value("n_outputs", std::size_t{1});
  a.sigma2_w2 = j.value("sigma2_w2", 1.0);

  auto read_children = [&] {
    for (const auto& c : j.at("children")) {
      json cj = c;
      if (!cj.contains("n_outputs") && a.n_outputs != 1) cj["n_outputs"] = a.n_outputs;
      a.children.push_back(parse_arch(cj, a.input_dim));
    }
  };

  if (type == "basic") {
    a.kind = NodeKind::Basic;
    a.activation = Activation::from_json(j.at("activation"));
    a.priors = PriorSpec::from_json(j.value("priors", json::object()));
    a.width = j.value("width", std::size_t{50});
  } else if (type == "deep") {
    a.kind = NodeKind::Deep;
    for (const auto& l : j.at("layers")) {
      LayerSpec ls;
      ls.activation = Activation::from_json(l.at("activation"));
      ls.width = l.value("width", std::size_t{50});
      ls.sigma2_w = l.value("sigma2_w", 1.0);
      ls.sigma2_b = l.value("sigma2_b", 1.0);
      a.layers.push_back(ls);
    }
  } else if (type == "output_sum") {
    a.kind = NodeKind::OutputSum;
    read_children();
  } else if (type == "output_product") {
    a.kind = NodeKind::OutputProduct;
    read_children();
  } else if (type == "hidden_mul") {
    a.kind = NodeKind::HiddenMul;
    read_children();
  } else if (type == "hidden_add") {
    a.kind = NodeKind::HiddenAdd;
    read_children();
  } else {
    throw std::invalid_argument("unknown architecture type '" + type + "'");
  }
  return a;
}

}  // namespace

ArchSpec ArchSpec::from_json(const json& j) {
  ArchSpec a = parse_arch(j, 1);
  a.validate();
  return a;
}

// --- constructors ------------------------------------------------------------

ArchSpec basic(Activation activation, PriorSpec priors, std::size_t width, std::size_t input_dim) {
  ArchSpec a;
  a.kind = NodeKind::Basic;
  a.activation = activation;
  a.priors = priors;
  a.width = width;
  a.input_dim = input_dim;
  return a;
}

ArchSpec deep(std::vector<LayerSpec> layers, double sigma2_w2, std::size_t input_dim) {
  ArchSpec a;
  a.kind = NodeKind::Deep;
  a.layers = std::move(layers);
  a.sigma2_w2 = sigma2_w2;
  a.input_dim = input_dim;
  return a;
}

namespace {

ArchSpec combinator(NodeKind kind, std::vector<ArchSpec> children, double sigma2_w2) {
  if (children.empty()) throw std::invalid_argument("arch " + to_string(kind) + ": needs at least one child");
  ArchSpec a;
  a.kind = kind;
  a.input_dim = children.front().input_dim;
  a.n_outputs = children.front().n_outputs;
  a.sigma2_w2 = sigma2_w2;
  a.children = std::move(children);
  return a;
}

}  // namespace

ArchSpec output_sum(std::vector<ArchSpec> children) {
  return combinator(NodeKind::OutputSum, std::move(children), 1.0);
}
ArchSpec output_product(std::vector<ArchSpec> children) {
  return combinator(NodeKind::OutputProduct, std::move(children), 1.0);
}
ArchSpec hidden_mul(std::vector<ArchSpec> children, double sigma2_w2) {
  return combinator(NodeKind::HiddenMul, std::move(children), sigma2_w2);
}
ArchSpec hidden_add(std::vector<ArchSpec> children, double sigma2_w2) {
  return combinator(NodeKind::HiddenAdd, std::move(children), sigma2_w2);
}

ArchSpec with_width(ArchSpec arch, std::size_t width) {
  arch.width = width;
  for (auto& l : arch.layers) l.width = width;
  for (auto& c : arch.children) c = with_width(std::move(c), width);
  return arch;
}

// --- equivalent kernels ------------------------------------------------------

namespace {

bool has_transform(const ArchSpec& a) { return a.warp.has_value() || !a.input_dims.empty(); }

Vec transform_input(const ArchSpec& a, const Vec& x) {
  Vec sel = x;
  if (!a.input_dims.empty()) {
    sel.resize(static_cast<Eigen::Index>(a.input_dims.size()));
    for (std::size_t i = 0; i < a.input_dims.size(); ++i)
      sel(static_cast<Eigen::Index>(i)) = x(static_cast<Eigen::Index>(a.input_dims[i]));
  }
  return a.warp ? a.warp->apply(sel) : sel;
}

Kernel apply_transform(const ArchSpec& a, Kernel k) {
  if (a.warp) k = kernel_warp(k, *a.warp);
  if (!a.input_dims.empty()) k = kernel_project(k, a.input_dims, a.input_dim);
  return k;
}

// Kernel of one Basic hidden unit scaled by `out_var`.
Kernel basic_kernel(const ArchSpec& a, double out_var) {
  if (a.kind != NodeKind::Basic)
    throw std::invalid_argument("equivalent_kernel: no analytic kernel for " + to_string(a.kind) +
                                " nodes (use empirical_kernel)");
  PriorSpec p = a.priors;
  p.sigma2_w2 = out_var;
  Kernel k = [&] {
    switch (a.activation.kind) {
      case ActivationKind::ReLU: return relu_kernel(p);
      case ActivationKind::ERF: return erf_kernel(p);
      case ActivationKind::Cosine: return cos_bnn_kernel(p);
      case ActivationKind::RBF: {
        Kernel r = rbf_bnn_kernel(RBFLayerParams{a.activation.sigma2_g, a.priors.sigma2_w1});
        return out_var == 1.0 ? r : kernel_scale(r, out_var);
      }
      default: break;
    }
    throw std::invalid_argument("equivalent_kernel: no closed form for " + a.activation.name() +
                                " activations (use empirical_kernel)");
  }();
  return apply_transform(a, k);
}

Kernel unit_kernel(const ArchSpec& a);

Kernel combine_hidden(const ArchSpec& a) {
  if (a.kind == NodeKind::HiddenMul) {
    Kernel acc = unit_kernel(a.children.front());
    for (std::size_t i = 1; i < a.children.size(); ++i) acc = kernel_mul(acc, unit_kernel(a.children[i]));
    return acc;
  }
  Kernel acc = unit_kernel(a.children.front());
  MeanFunction acc_mean = hidden_unit_mean(a.children.front());
  for (std::size_t i = 1; i < a.children.size(); ++i) {
    const MeanFunction m = hidden_unit_mean(a.children[i]);
    acc = hidden_add_kernel(acc, unit_kernel(a.children[i]), acc_mean, m, 1.0);
    if (i + 1 < a.children.size())
      acc_mean = MeanFunction::custom([acc_mean, m](const Vec& x) { return acc_mean(x) + m(x); });
  }
  return acc;
}

Kernel unit_kernel(const ArchSpec& a) {
  if (a.kind == NodeKind::HiddenMul || a.kind == NodeKind::HiddenAdd) return combine_hidden(a);
  return basic_kernel(a, 1.0);
}

Kernel output_kernel(const ArchSpec& a) {
  Kernel k = [&] {
    switch (a.kind) {
      case NodeKind::Basic: return basic_kernel(a, a.priors.sigma2_w2);
      case NodeKind::HiddenMul:
      case NodeKind::HiddenAdd: return kernel_scale(combine_hidden(a), a.sigma2_w2);
      case NodeKind::OutputSum: {
        Kernel acc = output_kernel(a.children.front());
        for (std::size_t i = 1; i < a.children.size(); ++i) acc = kernel_add(acc, output_kernel(a.children[i]));
        return acc;
      }
      case NodeKind::OutputProduct:
        throw std::invalid_argument(
            "equivalent_kernel: a product of network outputs is not a Gaussian process");
      case NodeKind::Deep: break;
    }
    throw std::invalid_argument("equivalent_kernel: deep networks have no analytic kernel here (use empirical_kernel)");
  }();
  if (a.sigma2_b_out > 0.0) k = kernel_add(k, constant_kernel(a.sigma2_b_out));
  return k;
}

MeanFunction basic_mean(const ArchSpec& a) {
  const PriorSpec p = a.priors;
  const Activation act = a.activation;
  std::function<double(const Vec&)> inner;
  switch (act.kind) {
    case ActivationKind::ERF:
    case ActivationKind::TanH:
      return MeanFunction::zero();
    case ActivationKind::ReLU:
      if (!has_transform(a)) return MeanFunction::relu(p);
      inner = [p](const Vec& z) { return relu_mean(z, p); };
      break;
    case ActivationKind::LeakyReLU:
      inner = [p, act](const Vec& z) { return (1.0 - act.slope) * relu_mean(z, p); };
      break;
    case ActivationKind::Cosine:
      inner = [p](const Vec& z) { return std::exp(-0.5 * p.preact_cov(z, z)); };
      break;
    case ActivationKind::RBF:
      inner = [p, act](const Vec& z) {
        const double v = act.sigma2_g + p.sigma2_w1;
        return std::pow(act.sigma2_g / v, 0.5 * static_cast<double>(z.size())) * std::exp(-z.squaredNorm() / (2.0 * v));
      };
      break;
  }
  return MeanFunction::custom([a, inner](const Vec& x) { return inner(transform_input(a, x)); });
}

}  // namespace

MeanFunction hidden_unit_mean(const ArchSpec& a) {
  switch (a.kind) {
    case NodeKind::Basic: return basic_mean(a);
    case NodeKind::HiddenMul:
    case NodeKind::HiddenAdd: {
      std::vector<MeanFunction> ms;
      for (const auto& c : a.children) ms.push_back(hidden_unit_mean(c));
      bool all_zero = true;
      for (const auto& m : ms) all_zero = all_zero && m.kind() == MeanFunction::Kind::Zero;
      if (all_zero) return MeanFunction::zero();
      const bool mul = a.kind == NodeKind::HiddenMul;
      return MeanFunction::custom([ms, mul](const Vec& x) {
        double acc = mul ? 1.0 : 0.0;
        for (const auto& m : ms) acc = mul ? acc * m(x) : acc + m(x);
        return acc;
      });
    }
    default: break;
  }
  throw std::invalid_argument("hidden_unit_mean: unsupported node " + to_string(a.kind));
}

Kernel equivalent_kernel(const ArchSpec& arch) {
  arch.validate();
  return output_kernel(arch);
}

}  // namespace bnnk
