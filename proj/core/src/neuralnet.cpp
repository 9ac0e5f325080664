#include "modal/neuralnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "modal/losses.hpp"

namespace modal {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::size_t DenseLayer::num_params() const {
  std::size_t n = static_cast<std::size_t>(W.size() + b.size());
  if (has_bn) n += static_cast<std::size_t>(gamma.size() + beta.size());
  return n;
}

std::vector<double> Gradients::flat() const {
  std::vector<double> out;
  for (const auto& g : layers) {
    for (Eigen::Index r = 0; r < g.dW.rows(); ++r)
      for (Eigen::Index c = 0; c < g.dW.cols(); ++c) out.push_back(g.dW(r, c));
    out.insert(out.end(), g.db.data(), g.db.data() + g.db.size());
    out.insert(out.end(), g.dgamma.data(), g.dgamma.data() + g.dgamma.size());
    out.insert(out.end(), g.dbeta.data(), g.dbeta.data() + g.dbeta.size());
  }
  return out;
}

Mlp Mlp::build(int in_dim, const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  if (in_dim < 1 || specs.empty()) throw Error(Errc::invalid_argument, "empty network");
  std::mt19937_64 rng(seed);
  Mlp m;
  int fan_in = in_dim;
  for (const auto& s : specs) {
    if (s.out < 1) throw Error(Errc::invalid_argument, "layer width must be positive");
    DenseLayer l;
    const double bound = std::sqrt(6.0 / (fan_in + s.out));
    std::uniform_real_distribution<double> u(-bound, bound);
    l.W.resize(s.out, fan_in);
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = u(rng);
    l.b = Eigen::VectorXd::Zero(s.out);
    l.has_bn = s.batchnorm;
    if (l.has_bn) {
      l.gamma = Eigen::VectorXd::Ones(s.out);
      l.beta = Eigen::VectorXd::Zero(s.out);
      l.running_mean = Eigen::VectorXd::Zero(s.out);
      l.running_var = Eigen::VectorXd::Ones(s.out);
    }
    l.activation = s.activation;
    m.layers_.push_back(std::move(l));
    fan_in = s.out;
  }
  return m;
}

Mlp Mlp::point_seg(int in_dim, int hidden, int depth, std::uint64_t seed) {
  if (depth < 1) throw Error(Errc::invalid_argument, "depth must be >= 1");
  std::vector<LayerSpec> specs;
  for (int i = 0; i + 1 < depth; ++i) specs.push_back({hidden, true, Activation::relu});
  specs.push_back({1, false, Activation::sigmoid});
  return build(in_dim, specs, seed);
}

int Mlp::in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
int Mlp::out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

std::vector<DenseLayer>& Mlp::mutable_layers() {
  ++version_;
  return layers_;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, ForwardCache* cache) {
  const bool train = mode_ == Mode::train;
  return run(x, train, train, cache);
}

Eigen::MatrixXd Mlp::predict(const Eigen::MatrixXd& x) const {
  return const_cast<Mlp*>(this)->run(x, false, false, nullptr);
}

Eigen::MatrixXd Mlp::forward_frozen(const Eigen::MatrixXd& x, ForwardCache* cache) const {
  return const_cast<Mlp*>(this)->run(x, true, false, cache);
}

Eigen::MatrixXd Mlp::run(const Eigen::MatrixXd& x, bool batch_stats, bool update_running,
                         ForwardCache* cache) {
  if (layers_.empty()) throw Error(Errc::invalid_argument, "forward through an empty network");
  if (x.cols() != in_dim()) {
    throw Error(Errc::dimension_mismatch, "input width " + std::to_string(x.cols()) +
                                              " != model input " + std::to_string(in_dim()));
  }
  const Eigen::Index n = x.rows();
  if (batch_stats && n < 2) throw Error(Errc::invalid_argument, "train-mode batch of size 1");
  if (cache) {
    cache->layers.assign(layers_.size(), {});
    cache->version = version_;
    cache->batch_stats = batch_stats;
  }
  Eigen::MatrixXd h = x;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    auto& l = layers_[li];
    Eigen::MatrixXd z = h * l.W.transpose();
    z.rowwise() += l.b.transpose();
    LayerCache* lc = cache ? &cache->layers[li] : nullptr;
    if (lc) lc->input = h;
    if (l.has_bn) {
      Eigen::VectorXd mean, var;
      if (batch_stats) {
        mean = z.colwise().mean().transpose();
        var = (z.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
        if (update_running) {
          const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
          l.running_mean = (1.0 - l.momentum) * l.running_mean + l.momentum * mean;
          l.running_var = (1.0 - l.momentum) * l.running_var + l.momentum * unbias * var;
        }
      } else {
        mean = l.running_mean;
        var = l.running_var;
      }
      const Eigen::VectorXd inv_std = (var.array() + l.eps).rsqrt().matrix();
      Eigen::MatrixXd xhat = (z.rowwise() - mean.transpose()) * inv_std.asDiagonal();
      z = xhat * l.gamma.asDiagonal();
      z.rowwise() += l.beta.transpose();
      if (lc) {
        lc->xhat = std::move(xhat);
        lc->inv_std = inv_std;
      }
    }
    if (lc) lc->pre = z;
    switch (l.activation) {
      case Activation::none:
        break;
      case Activation::relu:
        z = z.cwiseMax(0.0);
        break;
      case Activation::sigmoid:
        z = (1.0 + (-z.array()).exp()).inverse().matrix();
        break;
    }
    if (lc) lc->out = z;
    h = std::move(z);
  }
  return h;
}

Gradients Mlp::backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_out,
                        bool from_preactivation) const {
  if (cache.version != version_ || cache.layers.size() != layers_.size()) {
    throw Error(Errc::stale_cache, "forward cache does not match the current parameters");
  }
  const auto& last = cache.layers.back();
  if (grad_out.rows() != last.out.rows() || grad_out.cols() != last.out.cols()) {
    throw Error(Errc::dimension_mismatch, "output gradient shape differs from forward output");
  }
  Gradients g;
  g.layers.resize(layers_.size());
  Eigen::MatrixXd d = grad_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    const auto& lc = cache.layers[k];
    if (!(from_preactivation && k + 1 == layers_.size())) {
      switch (l.activation) {
        case Activation::none:
          break;
        case Activation::relu:
          d = d.cwiseProduct((lc.pre.array() > 0.0).cast<double>().matrix());
          break;
        case Activation::sigmoid:
          d = d.cwiseProduct((lc.out.array() * (1.0 - lc.out.array())).matrix());
          break;
      }
    }
    auto& lg = g.layers[k];
    if (l.has_bn) {
      lg.dgamma = (d.cwiseProduct(lc.xhat)).colwise().sum().transpose();
      lg.dbeta = d.colwise().sum().transpose();
      const Eigen::MatrixXd dxhat = d * l.gamma.asDiagonal();
      if (cache.batch_stats) {
        const double n = static_cast<double>(d.rows());
        const Eigen::RowVectorXd sum_dx = dxhat.colwise().sum();
        const Eigen::RowVectorXd sum_dx_x = dxhat.cwiseProduct(lc.xhat).colwise().sum();
        Eigen::MatrixXd dz = (n * dxhat).rowwise() - sum_dx;
        dz -= lc.xhat * sum_dx_x.asDiagonal();
        d = dz * (lc.inv_std / n).asDiagonal();
      } else {
        d = dxhat * lc.inv_std.asDiagonal();
      }
    }
    lg.dW = d.transpose() * lc.input;
    lg.db = d.colwise().sum().transpose();
    d = d * l.W;
  }
  g.input_grad = std::move(d);
  return g;
}

std::size_t Mlp::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.num_params();
  return n;
}

std::vector<double> Mlp::flat_params() const {
  std::vector<double> out;
  out.reserve(num_params());
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) out.push_back(l.W(r, c));
    out.insert(out.end(), l.b.data(), l.b.data() + l.b.size());
    if (l.has_bn) {
      out.insert(out.end(), l.gamma.data(), l.gamma.data() + l.gamma.size());
      out.insert(out.end(), l.beta.data(), l.beta.data() + l.beta.size());
    }
  }
  return out;
}

void Mlp::set_flat_params(const std::vector<double>& params) {
  if (params.size() != num_params()) {
    throw Error(Errc::dimension_mismatch, "parameter vector has the wrong length");
  }
  std::size_t i = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = params[i++];
    for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b(r) = params[i++];
    if (l.has_bn) {
      for (Eigen::Index r = 0; r < l.gamma.size(); ++r) l.gamma(r) = params[i++];
      for (Eigen::Index r = 0; r < l.beta.size(); ++r) l.beta(r) = params[i++];
    }
  }
  ++version_;
}

void optimizer_step(Mlp& model, const Gradients& grads, OptimizerState& state) {
  if (!(state.learning_rate >= 0.0)) {
    throw Error(Errc::invalid_argument, "learning rate must be non-negative");
  }
  const auto g = grads.flat();
  auto theta = model.flat_params();
  if (g.size() != theta.size()) {
    throw Error(Errc::dimension_mismatch, "gradient does not match the model parameters");
  }
  for (double v : g) {
    if (std::isnan(v)) throw Error(Errc::numeric_error, "NaN gradient");
  }
  if (state.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= state.learning_rate * g[i];
  } else {
    if (state.m.empty()) {
      state.m.assign(theta.size(), 0.0);
      state.v.assign(theta.size(), 0.0);
    }
    if (state.m.size() != theta.size()) {
      throw Error(Errc::dimension_mismatch, "Adam moments do not match the model");
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
      state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = state.m[i] / c1;
      const double vhat = state.v[i] / c2;
      theta[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
  model.set_flat_params(theta);
}

namespace {

double dataset_loss(const Mlp& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  ForwardCache cache;
  model.forward_frozen(x, &cache);
  const Eigen::MatrixXd& logits = cache.layers.back().pre;
  return bce_with_logits({logits.data(), static_cast<std::size_t>(logits.size())},
                         {y.data(), static_cast<std::size_t>(y.size())})
      .value;
}

}  // namespace

TrainResult train_epochs(Mlp& model, const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                         OptimizerState& optimizer, const TrainConfig& config) {
  const Eigen::Index n = features.rows();
  if (n == 0) throw Error(Errc::empty_input, "empty training set");
  if (labels.size() != n) throw Error(Errc::count_mismatch, "labels do not match features");
  if (model.out_dim() != 1 || model.layers().back().activation != Activation::sigmoid) {
    throw Error(Errc::invalid_argument, "training expects a single sigmoid output");
  }
  if (n < 2) throw Error(Errc::invalid_argument, "train-mode batch of size 1");
  if (config.batch_size < 2) throw Error(Errc::invalid_argument, "batch_size must be >= 2");
  TrainResult result;
  const double positives = labels.sum();
  result.single_class = positives == 0.0 || positives == static_cast<double>(n);

  std::mt19937_64 rng(config.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  model.set_mode(Mode::train);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
      batches.push_back({s, std::min(order.size(), s + config.batch_size)});
    }
    if (batches.size() > 1 && batches.back().second - batches.back().first == 1) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }
    for (const auto& [lo, hi] : batches) {
      const auto m = static_cast<Eigen::Index>(hi - lo);
      Eigen::MatrixXd xb(m, features.cols());
      Eigen::VectorXd yb(m);
      for (Eigen::Index r = 0; r < m; ++r) {
        xb.row(r) = features.row(order[lo + r]);
        yb(r) = labels(order[lo + r]);
      }
      ForwardCache cache;
      model.forward(xb, &cache);
      const Eigen::MatrixXd& logits = cache.layers.back().pre;
      const auto loss = bce_with_logits({logits.data(), static_cast<std::size_t>(m)},
                                        {yb.data(), static_cast<std::size_t>(m)});
      const Eigen::MatrixXd grad =
          Eigen::Map<const Eigen::MatrixXd>(loss.gradient.data(), m, 1);
      optimizer_step(model, model.backward(cache, grad, true), optimizer);
    }
    result.loss_trace.push_back(dataset_loss(model, features, labels));
  }
  model.set_mode(Mode::eval);
  return result;
}

namespace {

constexpr char kMagic[8] = {'M', 'O', 'D', 'A', 'L', 'M', 'L', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put_vec(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v(i));
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw Error(Errc::truncated_record, "checkpoint truncated");
  }
  return v;
}
double get_f64(std::istream& in) {
  double v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw Error(Errc::truncated_record, "checkpoint truncated");
  }
  return v;
}
Eigen::VectorXd get_vec(std::istream& in, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = get_f64(in);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Mlp& model) {
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(model.layers_.size()));
  for (const auto& l : model.layers_) {
    put_u32(out, static_cast<std::uint32_t>(l.in_dim()));
    put_u32(out, static_cast<std::uint32_t>(l.out_dim()));
    put_u32(out, static_cast<std::uint32_t>(l.activation));
    put_u32(out, l.has_bn ? 1u : 0u);
  }
  for (const auto& l : model.layers_) {
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) put_f64(out, l.W(r, c));
    put_vec(out, l.b);
    if (l.has_bn) {
      put_vec(out, l.gamma);
      put_vec(out, l.beta);
      put_vec(out, l.running_mean);
      put_vec(out, l.running_var);
      put_f64(out, l.momentum);
      put_f64(out, l.eps);
    }
  }
}

Mlp read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw Error(Errc::parse_error, "not a model checkpoint");
  }
  if (get_u32(in) != kVersion) throw Error(Errc::parse_error, "unsupported checkpoint version");
  const std::uint32_t count = get_u32(in);
  if (count == 0 || count > 1024) throw Error(Errc::parse_error, "bad layer count");
  Mlp m;
  m.layers_.resize(count);
  std::uint32_t prev_out = 0;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto in_dim = get_u32(in);
    const auto out_dim = get_u32(in);
    const auto act = get_u32(in);
    const auto bn = get_u32(in);
    if (in_dim == 0 || out_dim == 0 || in_dim > (1u << 20) || out_dim > (1u << 20) || act > 2 ||
        bn > 1 || (k > 0 && in_dim != prev_out)) {
      throw Error(Errc::parse_error, "bad layer header");
    }
    auto& l = m.layers_[k];
    l.W.resize(out_dim, in_dim);
    l.activation = static_cast<Activation>(act);
    l.has_bn = bn == 1;
    prev_out = out_dim;
  }
  for (auto& l : m.layers_) {
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = get_f64(in);
    l.b = get_vec(in, l.W.rows());
    if (l.has_bn) {
      l.gamma = get_vec(in, l.W.rows());
      l.beta = get_vec(in, l.W.rows());
      l.running_mean = get_vec(in, l.W.rows());
      l.running_var = get_vec(in, l.W.rows());
      l.momentum = get_f64(in);
      l.eps = get_f64(in);
      if (!(l.running_var.array() > 0.0).all()) {
        throw Error(Errc::parse_error, "checkpoint running variance not positive");
      }
    }
  }
  m.mode_ = Mode::eval;
  return m;
}

void save_checkpoint(const std::string& path, const Mlp& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::missing_input, "cannot write " + path);
  write_checkpoint(out, model);
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::missing_input, "cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace modal
