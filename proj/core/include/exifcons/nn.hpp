#pragma once

// Minimal CPU layer library: row-major batch matrices (one sample per row,
// CHW within a row), explicit forward/backward, Adam. Instantiated for float
// (training and inference) and double (gradient checking).
//
// forward() caches what backward() needs; infer() is const and keeps no
// state, so one model can serve concurrent inference callers.

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "exifcons/rng.hpp"

namespace exifcons::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Param {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix<T>::Zero(rows, cols)),
        grad(Matrix<T>::Zero(rows, cols)) {}
};

struct Shape {
  int channels = 0;
  int height = 1;
  int width = 1;
  Eigen::Index size() const { return Eigen::Index(channels) * height * width; }
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  /// `in` is N x (input size); `out` is resized by the layer.
  virtual void forward(const Matrix<T>& in, Matrix<T>& out) = 0;
  virtual void infer(const Matrix<T>& in, Matrix<T>& out) const = 0;
  /// Accumulates parameter gradients; writes dL/d(in) when `grad_in` is set.
  virtual void backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) = 0;
  virtual void collect(std::vector<Param<T>*>& out) { (void)out; }
  virtual Shape output_shape() const = 0;
};

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, Shape in, int out_channels, int kernel, int stride, int pad);
  void forward(const Matrix<T>& in, Matrix<T>& out) override;
  void infer(const Matrix<T>& in, Matrix<T>& out) const override;
  void backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) override;
  void collect(std::vector<Param<T>*>& out) override;
  Shape output_shape() const override { return out_; }
  void init_he(Rng& rng, T gain = T(1));

  Param<T> weight;  // out_channels x (in_channels * k * k)
  Param<T> bias;    // out_channels x 1

 private:
  void run(const Matrix<T>& in, Matrix<T>& out, std::vector<Matrix<T>>* cache) const;
  void im2col(const T* img, Matrix<T>& cols) const;
  void col2im(const Matrix<T>& cols, T* img) const;

  Shape in_, out_;
  int kernel_, stride_, pad_;
  std::vector<Matrix<T>> cols_;
};

template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::string name, int in_features, int out_features);
  void forward(const Matrix<T>& in, Matrix<T>& out) override;
  void infer(const Matrix<T>& in, Matrix<T>& out) const override;
  void backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) override;
  void collect(std::vector<Param<T>*>& out) override;
  Shape output_shape() const override { return {int(weight.value.rows()), 1, 1}; }
  void init_he(Rng& rng, T gain = T(1));

  Param<T> weight;  // out x in
  Param<T> bias;    // 1 x out

 private:
  Matrix<T> input_;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  explicit ReLU(Shape shape) : shape_(shape) {}
  void forward(const Matrix<T>& in, Matrix<T>& out) override;
  void infer(const Matrix<T>& in, Matrix<T>& out) const override;
  void backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) override;
  Shape output_shape() const override { return shape_; }

 private:
  Shape shape_;
  Matrix<T> output_;
};

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(Shape in, int kernel, int stride, int pad);
  void forward(const Matrix<T>& in, Matrix<T>& out) override;
  void infer(const Matrix<T>& in, Matrix<T>& out) const override;
  void backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) override;
  Shape output_shape() const override { return out_; }

 private:
  void run(const Matrix<T>& in, Matrix<T>& out,
           std::vector<std::vector<std::int32_t>>* argmax) const;

  Shape in_, out_;
  int kernel_, stride_, pad_;
  std::vector<std::vector<std::int32_t>> argmax_;
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  explicit GlobalAvgPool(Shape in) : in_(in) {}
  void forward(const Matrix<T>& in, Matrix<T>& out) override;
  void infer(const Matrix<T>& in, Matrix<T>& out) const override;
  void backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) override;
  Shape output_shape() const override { return {in_.channels, 1, 1}; }

 private:
  Shape in_;
};

/// Fixed high-pass filter: gain * (x - 3x3 box mean of x) per channel, with
/// replicated borders. Suppresses scene content so low-amplitude sensor and
/// compression traces dominate the first learned layer's input.
template <typename T>
class HighPass final : public Layer<T> {
 public:
  HighPass(Shape in, T gain) : in_(in), gain_(gain) {}
  void forward(const Matrix<T>& in, Matrix<T>& out) override { infer(in, out); }
  void infer(const Matrix<T>& in, Matrix<T>& out) const override;
  void backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) override;
  Shape output_shape() const override { return in_; }

 private:
  Shape in_;
  T gain_;
};

/// Ordered chain of layers; owns them.
template <typename T>
class Sequential final : public Layer<T> {
 public:
  explicit Sequential(Shape in) : in_(in) {}
  /// Appends a layer; returns it for further configuration.
  template <typename L>
  L& add(std::unique_ptr<L> layer) {
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void forward(const Matrix<T>& in, Matrix<T>& out) override;
  void infer(const Matrix<T>& in, Matrix<T>& out) const override;
  void backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) override;
  void collect(std::vector<Param<T>*>& out) override;
  Shape output_shape() const override {
    return layers_.empty() ? in_ : layers_.back()->output_shape();
  }
  std::size_t size() const { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_[i]; }
  const Layer<T>& at(std::size_t i) const { return *layers_[i]; }

 private:
  Shape in_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<Matrix<T>> acts_;  // acts_[i] = output of layer i
};

/// Residual bottleneck: 1x1 -> 3x3 (stride) -> 1x1 (expansion) plus an
/// identity or 1x1 projection shortcut, followed by ReLU. The last conv of
/// the residual branch starts at zero so every block begins as a pass-through.
template <typename T>
class Bottleneck final : public Layer<T> {
 public:
  Bottleneck(const std::string& name, Shape in, int mid_channels, int out_channels,
             int stride, Rng& rng);
  void forward(const Matrix<T>& in, Matrix<T>& out) override;
  void infer(const Matrix<T>& in, Matrix<T>& out) const override;
  void backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) override;
  void collect(std::vector<Param<T>*>& out) override;
  Shape output_shape() const override { return branch_.output_shape(); }

 private:
  Sequential<T> branch_;
  std::unique_ptr<Conv2d<T>> projection_;
  Matrix<T> output_;
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<Param<T>*> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);
  void zero_grad();
  void step();
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::int64_t steps() const { return t_; }

 private:
  std::vector<Param<T>*> params_;
  std::vector<Matrix<T>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace exifcons::nn
