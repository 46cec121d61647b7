#include <stdexcept>
#include <string>

#include "bnnk/kernel.hpp"

namespace bnnk {

namespace {

PriorSpec priors_of(const nlohmann::json& j) {
  return PriorSpec::from_json(j.value("priors", nlohmann::json::object()));
}

std::vector<Kernel> children_of(const nlohmann::json& j, const std::string& type) {
  const auto& arr = j.at("children");
  if (!arr.is_array() || arr.size() < 2)
    throw std::invalid_argument("kernel '" + type + "': needs at least two children");
  std::vector<Kernel> out;
  for (const auto& c : arr) out.push_back(Kernel::from_json(c));
  return out;
}

}  // namespace

Kernel Kernel::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("kernel config must be a JSON object");
  if (j.contains("schema_version") && j.at("schema_version").get<int>() != 1)
    throw std::invalid_argument("kernel config: unsupported schema_version");
  const auto type = j.at("type").get<std::string>();

  if (type == "se") {
    SEParams p;
    p.sigma2 = j.value("sigma2", p.sigma2);
    p.length_scale = j.value("length_scale", p.length_scale);
    return se_kernel(p);
  }
  if (type == "ess") {
    ESSParams p;
    p.sigma2 = j.value("sigma2", p.sigma2);
    p.length_scale = j.value("length_scale", p.length_scale);
    p.period = j.at("period").get<double>();
    return ess_kernel(p);
  }
  if (type == "relu") return relu_kernel(priors_of(j));
  if (type == "erf") return erf_kernel(priors_of(j));
  if (type == "cos_bnn") return cos_bnn_kernel(priors_of(j));
  if (type == "rbf_bnn") {
    RBFLayerParams p;
    p.sigma2_g = j.value("sigma2_g", p.sigma2_g);
    p.sigma2_u = j.value("sigma2_u", p.sigma2_u);
    return rbf_bnn_kernel(p);
  }
  if (type == "relu_periodic") return relu_periodic_kernel(j.at("period").get<double>(), priors_of(j));
  if (type == "constant") return constant_kernel(j.at("value").get<double>());
  if (type == "zero") return zero_kernel();
  if (type == "add" || type == "mul") {
    auto kids = children_of(j, type);
    Kernel acc = kids.front();
    for (std::size_t i = 1; i < kids.size(); ++i)
      acc = type == "add" ? kernel_add(acc, kids[i]) : kernel_mul(acc, kids[i]);
    return acc;
  }
  if (type == "scale") return kernel_scale(from_json(j.at("child")), j.at("factor").get<double>());
  if (type == "pow") return kernel_pow(from_json(j.at("child")), j.at("n").get<int>());
  if (type == "warp") return kernel_warp(from_json(j.at("child")), WarpSpec::from_json(j.at("warp")));
  if (type == "project") {
    std::optional<std::size_t> ambient;
    if (j.contains("ambient_dim")) ambient = j.at("ambient_dim").get<std::size_t>();
    return kernel_project(from_json(j.at("child")), j.at("dims").get<std::vector<std::size_t>>(), ambient);
  }
  if (type == "hidden_add") {
    auto kids = children_of(j, type);
    if (kids.size() != 2) throw std::invalid_argument("kernel 'hidden_add': needs exactly two children");
    const auto& means = j.at("means");
    if (!means.is_array() || means.size() != 2)
      throw std::invalid_argument("kernel 'hidden_add': needs two mean functions");
    return hidden_add_kernel(kids[0], kids[1], MeanFunction::from_json(means[0]), MeanFunction::from_json(means[1]),
                             j.at("sigma2_w2").get<double>());
  }
  throw std::invalid_argument("unknown kernel type '" + type + "'");
}

}  // namespace bnnk
