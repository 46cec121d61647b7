#include "bnnk/network.hpp"

#include <cmath>
#include <stdexcept>

namespace bnnk {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

using CMap = Eigen::Map<const MatrixXd>;
using MMap = Eigen::Map<MatrixXd>;

struct NodeTape {
  std::vector<MatrixXd> inputs;  // input to each layer
  std::vector<MatrixXd> pre;     // pre-activations (RBF: unit outputs)
  MatrixXd features;
  MatrixXd outputs;
};

using Tape = std::vector<NodeTape>;

class Evaluator {
 public:
  Evaluator(const std::vector<Network::Node>& nodes, const VectorXd& theta, VectorXd* grad)
      : nodes_(nodes), theta_(theta), grad_(grad), tape_(nodes.size()) {}

  MatrixXd feature_fwd(int n, const MatrixXd& X) {
    const auto& node = nodes_[static_cast<std::size_t>(n)];
    auto& t = tape_[static_cast<std::size_t>(n)];
    if (node.kind == NodeKind::HiddenMul || node.kind == NodeKind::HiddenAdd) {
      MatrixXd acc = feature_fwd(node.children.front(), X);
      for (std::size_t i = 1; i < node.children.size(); ++i) {
        const MatrixXd f = feature_fwd(node.children[i], X);
        if (node.kind == NodeKind::HiddenMul) acc.array() *= f.array();
        else acc += f;
      }
      t.features = acc;
      return acc;
    }

    MatrixXd Z;
    if (node.select.empty()) {
      Z = X;
    } else {
      Z.resize(static_cast<Index>(node.select.size()), X.cols());
      for (std::size_t i = 0; i < node.select.size(); ++i) Z.row(static_cast<Index>(i)) = X.row(node.select[i]);
    }
    if (node.warp) Z = node.warp->apply_cols(Z);

    t.inputs.clear();
    t.pre.clear();
    for (const auto& layer : node.layers) {
      const CMap W(theta_.data() + layer.w_offset, layer.out, layer.in);
      t.inputs.push_back(Z);
      if (layer.activation.kind == ActivationKind::RBF) {
        // exp(-||z_j - c_i||^2 / (2 g))
        const VectorXd zn = Z.colwise().squaredNorm().transpose();
        const VectorXd cn = W.rowwise().squaredNorm();
        MatrixXd D = -2.0 * W * Z;
        D.colwise() += cn;
        D.rowwise() += zn.transpose();
        MatrixXd H = (-D.array().max(0.0) / (2.0 * layer.activation.sigma2_g)).exp().matrix();
        t.pre.push_back(H);
        Z = std::move(H);
      } else {
        MatrixXd A = W * Z;
        if (layer.b_offset >= 0) A.colwise() += Eigen::Map<const VectorXd>(theta_.data() + layer.b_offset, layer.out);
        const Activation act = layer.activation;
        Z = A.unaryExpr([act](double a) { return act(a); });
        t.pre.push_back(std::move(A));
      }
    }
    t.features = Z;
    return Z;
  }

  void feature_bwd(int n, const MatrixXd& dF) {
    const auto& node = nodes_[static_cast<std::size_t>(n)];
    auto& t = tape_[static_cast<std::size_t>(n)];
    if (node.kind == NodeKind::HiddenAdd) {
      for (int c : node.children) feature_bwd(c, dF);
      return;
    }
    if (node.kind == NodeKind::HiddenMul) {
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        MatrixXd d = dF;
        for (std::size_t k = 0; k < node.children.size(); ++k)
          if (k != i) d.array() *= tape_[static_cast<std::size_t>(node.children[k])].features.array();
        feature_bwd(node.children[i], d);
      }
      return;
    }

    MatrixXd d = dF;
    for (std::size_t li = node.layers.size(); li-- > 0;) {
      const auto& layer = node.layers[li];
      const CMap W(theta_.data() + layer.w_offset, layer.out, layer.in);
      MMap gW(grad_->data() + layer.w_offset, layer.out, layer.in);
      const MatrixXd& Z = t.inputs[li];
      if (layer.activation.kind == ActivationKind::RBF) {
        const MatrixXd G = (d.array() * t.pre[li].array()).matrix() / layer.activation.sigma2_g;
        const VectorXd g_rows = G.rowwise().sum();
        gW += G * Z.transpose();
        gW -= g_rows.asDiagonal() * W;
        if (li > 0) {
          MatrixXd dZ = W.transpose() * G;
          dZ -= (Z.array().rowwise() * G.colwise().sum().array()).matrix();
          d = std::move(dZ);
        }
      } else {
        const Activation act = layer.activation;
        const MatrixXd dA = (d.array() * t.pre[li].unaryExpr([act](double a) { return act.derivative(a); }).array()).matrix();
        gW += dA * Z.transpose();
        if (layer.b_offset >= 0) Eigen::Map<VectorXd>(grad_->data() + layer.b_offset, layer.out) += dA.rowwise().sum();
        if (li > 0) d = W.transpose() * dA;
      }
    }
  }

  MatrixXd output_fwd(int n, const MatrixXd& X) {
    const auto& node = nodes_[static_cast<std::size_t>(n)];
    auto& t = tape_[static_cast<std::size_t>(n)];
    MatrixXd O;
    if (node.kind == NodeKind::OutputSum || node.kind == NodeKind::OutputProduct) {
      O = output_fwd(node.children.front(), X);
      for (std::size_t i = 1; i < node.children.size(); ++i) {
        const MatrixXd o = output_fwd(node.children[i], X);
        if (node.kind == NodeKind::OutputSum) O += o;
        else O.array() *= o.array();
      }
    } else {
      const MatrixXd F = feature_fwd(n, X);
      const CMap W(theta_.data() + node.w_out_offset, node.n_out, node.width);
      O = W * F;
      if (node.b_out_offset >= 0) O.colwise() += Eigen::Map<const VectorXd>(theta_.data() + node.b_out_offset, node.n_out);
    }
    t.outputs = O;
    return O;
  }

  void output_bwd(int n, const MatrixXd& dO) {
    const auto& node = nodes_[static_cast<std::size_t>(n)];
    if (node.kind == NodeKind::OutputSum) {
      for (int c : node.children) output_bwd(c, dO);
      return;
    }
    if (node.kind == NodeKind::OutputProduct) {
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        MatrixXd d = dO;
        for (std::size_t k = 0; k < node.children.size(); ++k)
          if (k != i) d.array() *= tape_[static_cast<std::size_t>(node.children[k])].outputs.array();
        output_bwd(node.children[i], d);
      }
      return;
    }
    const auto& t = tape_[static_cast<std::size_t>(n)];
    const CMap W(theta_.data() + node.w_out_offset, node.n_out, node.width);
    MMap(grad_->data() + node.w_out_offset, node.n_out, node.width) += dO * t.features.transpose();
    if (node.b_out_offset >= 0) Eigen::Map<VectorXd>(grad_->data() + node.b_out_offset, node.n_out) += dO.rowwise().sum();
    feature_bwd(n, W.transpose() * dO);
  }

 private:
  const std::vector<Network::Node>& nodes_;
  const VectorXd& theta_;
  VectorXd* grad_;
  Tape tape_;
};

}  // namespace

Network::Network(ArchSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  compile(spec_, true, "root");
  prior_var_.resize(num_params_);
  for (const auto& b : blocks_) prior_var_.segment(b.offset, b.rows * b.cols).setConstant(b.variance);
}

int Network::compile(const ArchSpec& a, bool has_output, const std::string& path) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Node node;
  node.kind = a.kind;
  node.has_output = has_output && a.is_feature();
  node.n_out = static_cast<Index>(a.n_outputs);

  auto add_block = [&](const std::string& name, Index rows, Index cols, double variance) {
    blocks_.push_back(Block{path + "/" + name, num_params_, rows, cols, variance});
    num_params_ += rows * cols;
    return blocks_.back().offset;
  };

  switch (a.kind) {
    case NodeKind::Basic:
    case NodeKind::Deep: {
      for (std::size_t d : a.input_dims) node.select.push_back(static_cast<Index>(d));
      node.warp = a.warp;
      Index in = static_cast<Index>(a.transformed_dim());
      const auto layers = a.feature_layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& ls = layers[l];
        Layer layer;
        layer.activation = ls.activation;
        layer.in = in;
        layer.out = static_cast<Index>(ls.width);
        const std::string lp = "layer" + std::to_string(l);
        layer.w_offset = add_block(lp + (ls.activation.kind == ActivationKind::RBF ? "/centres" : "/W"), layer.out,
                                   layer.in, ls.sigma2_w);
        if (ls.activation.has_bias()) layer.b_offset = add_block(lp + "/b", layer.out, 1, ls.sigma2_b);
        node.layers.push_back(layer);
        in = layer.out;
      }
      node.width = in;
      break;
    }
    case NodeKind::HiddenMul:
    case NodeKind::HiddenAdd:
      for (std::size_t i = 0; i < a.children.size(); ++i)
        node.children.push_back(compile(a.children[i], false, path + "/" + std::to_string(i)));
      node.width = static_cast<Index>(a.hidden_width());
      break;
    case NodeKind::OutputSum:
    case NodeKind::OutputProduct:
      for (std::size_t i = 0; i < a.children.size(); ++i)
        node.children.push_back(compile(a.children[i], true, path + "/" + std::to_string(i)));
      break;
  }

  if (node.has_output) {
    node.w_out_offset = add_block("out/W", node.n_out, node.width, a.output_variance() / static_cast<double>(node.width));
    if (a.sigma2_b_out > 0.0) node.b_out_offset = add_block("out/b", node.n_out, 1, a.sigma2_b_out);
  }
  nodes_[static_cast<std::size_t>(id)] = std::move(node);
  return id;
}

ParamSet Network::sample(Rng& rng) const {
  ParamSet p;
  p.values.resize(num_params_);
  for (Index i = 0; i < num_params_; ++i) p.values(i) = rng.normal(prior_var_(i));
  return p;
}

namespace {

void check_shapes(const Network& net, const VectorXd& theta, const MatrixXd& X) {
  if (theta.size() != net.num_params())
    throw std::invalid_argument("Network: expected " + std::to_string(net.num_params()) + " parameters, got " +
                                std::to_string(theta.size()));
  if (static_cast<std::size_t>(X.rows()) != net.input_dim())
    throw std::invalid_argument("Network: expected inputs of dimension " + std::to_string(net.input_dim()) +
                                ", got " + std::to_string(X.rows()));
}

}  // namespace

MatrixXd Network::forward(const VectorXd& theta, const MatrixXd& X) const {
  check_shapes(*this, theta, X);
  Evaluator ev(nodes_, theta, nullptr);
  return ev.output_fwd(0, X);
}

MatrixXd Network::forward_backward(const VectorXd& theta, const MatrixXd& X, const MatrixXd& d_out,
                                   VectorXd& grad) const {
  check_shapes(*this, theta, X);
  if (grad.size() != num_params_) grad = VectorXd::Zero(num_params_);
  Evaluator ev(nodes_, theta, &grad);
  MatrixXd out = ev.output_fwd(0, X);
  if (d_out.rows() != out.rows() || d_out.cols() != out.cols())
    throw std::invalid_argument("Network::forward_backward: d_out shape mismatch");
  ev.output_bwd(0, d_out);
  return out;
}

MatrixXd Network::features(const VectorXd& theta, const MatrixXd& X) const {
  check_shapes(*this, theta, X);
  if (!spec_.is_feature()) throw std::invalid_argument("Network::features: root is not a feature node");
  Evaluator ev(nodes_, theta, nullptr);
  return ev.feature_fwd(0, X);
}

ParamSet sample_params(const ArchSpec& arch, std::uint64_t seed) {
  Rng rng(seed);
  return Network(arch).sample(rng);
}

double forward(const ArchSpec& arch, const ParamSet& params, const Eigen::VectorXd& x) {
  const Network net(arch);
  if (net.num_outputs() != 1) throw std::invalid_argument("forward: architecture has multiple outputs");
  return net.forward(params.values, x)(0, 0);
}

}  // namespace bnnk
