#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "modal/core_types.hpp"

namespace modal {

enum class Activation : std::uint32_t { none = 0, relu = 1, sigmoid = 2 };

/// linear -> optional batch norm -> activation. W is out x in.
struct DenseLayer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
  bool has_bn = false;
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  Activation activation = Activation::none;

  int in_dim() const { return static_cast<int>(W.cols()); }
  int out_dim() const { return static_cast<int>(W.rows()); }
  std::size_t num_params() const;
};

struct LayerSpec {
  int out = 0;
  bool batchnorm = false;
  Activation activation = Activation::none;
};

enum class Mode { train, eval };

struct LayerCache {
  Eigen::MatrixXd input;  // batch x in
  Eigen::MatrixXd xhat;   // normalized linear output (BN layers)
  Eigen::VectorXd inv_std;
  Eigen::MatrixXd pre;    // input to the activation
  Eigen::MatrixXd out;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  std::uint64_t version = 0;
  bool batch_stats = false;
};

struct LayerGrad {
  Eigen::MatrixXd dW;
  Eigen::VectorXd db;
  Eigen::VectorXd dgamma;
  Eigen::VectorXd dbeta;
};

struct Gradients {
  std::vector<LayerGrad> layers;
  Eigen::MatrixXd input_grad;
  /// Same order as Mlp::flat_params.
  std::vector<double> flat() const;
};

/// Fully connected network over row-major batches (one sample per row).
class Mlp {
 public:
  Mlp() = default;
  /// Xavier-uniform weights, zero biases, gamma 1, beta 0.
  static Mlp build(int in_dim, const std::vector<LayerSpec>& layers, std::uint64_t seed);
  /// `depth` layers: hidden linear+BN+ReLU of width `hidden`, then a linear
  /// sigmoid head with one output.
  static Mlp point_seg(int in_dim, int hidden = 64, int depth = 4, std::uint64_t seed = 0);

  int in_dim() const;
  int out_dim() const;
  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  /// Any access through here counts as a parameter change.
  std::vector<DenseLayer>& mutable_layers();
  std::uint64_t version() const { return version_; }

  /// Train mode normalizes with batch statistics and updates running stats;
  /// eval mode uses running stats.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, ForwardCache* cache = nullptr);
  /// Eval-mode forward; never touches state.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
  /// Batch-statistics forward without updating running stats.
  Eigen::MatrixXd forward_frozen(const Eigen::MatrixXd& x, ForwardCache* cache = nullptr) const;

  /// Reverse pass. With `from_preactivation`, `grad_out` is taken with respect
  /// to the last layer's activation input (e.g. logits of a sigmoid head).
  Gradients backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_out,
                     bool from_preactivation = false) const;

  std::size_t num_params() const;
  /// W (row-major), b, gamma, beta per layer.
  std::vector<double> flat_params() const;
  void set_flat_params(const std::vector<double>& params);

  friend void write_checkpoint(std::ostream& out, const Mlp& model);
  friend Mlp read_checkpoint(std::istream& in);

 private:
  Eigen::MatrixXd run(const Eigen::MatrixXd& x, bool batch_stats, bool update_running,
                      ForwardCache* cache);

  std::vector<DenseLayer> layers_;
  Mode mode_ = Mode::train;
  std::uint64_t version_ = 1;
};

enum class OptimizerKind { sgd, adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  static OptimizerState sgd(double lr) {
    OptimizerState s;
    s.learning_rate = lr;
    return s;
  }
  static OptimizerState adam(double lr) {
    OptimizerState s;
    s.kind = OptimizerKind::adam;
    s.learning_rate = lr;
    return s;
  }
};

void optimizer_step(Mlp& model, const Gradients& grads, OptimizerState& state);

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainResult {
  /// Full-dataset BCE after each epoch.
  std::vector<double> loss_trace;
  bool single_class = false;
};

/// Minibatch BCE training of a single-output sigmoid model. Labels in {0,1}.
TrainResult train_epochs(Mlp& model, const Eigen::MatrixXd& features,
                         const Eigen::VectorXd& labels, OptimizerState& optimizer,
                         const TrainConfig& config);

void write_checkpoint(std::ostream& out, const Mlp& model);
Mlp read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Mlp& model);
Mlp load_checkpoint(const std::string& path);

}  // namespace modal
