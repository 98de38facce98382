#include "exifcons/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace exifcons::nn {

namespace {

int conv_out(int size, int kernel, int stride, int pad) {
  return (size + 2 * pad - kernel) / stride + 1;
}

template <typename T>
void fill_normal(Matrix<T>& m, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = T(dist(rng));
}

}  // namespace

// ---- Conv2d -----------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::string name, Shape in, int out_channels, int kernel, int stride,
                  int pad)
    : weight(name + ".weight", out_channels, Eigen::Index(in.channels) * kernel * kernel),
      bias(name + ".bias", out_channels, 1),
      in_(in),
      out_{out_channels, conv_out(in.height, kernel, stride, pad),
           conv_out(in.width, kernel, stride, pad)},
      kernel_(kernel),
      stride_(stride),
      pad_(pad) {
  if (out_.height <= 0 || out_.width <= 0) {
    throw std::invalid_argument("convolution " + name + " collapses its input");
  }
}

template <typename T>
void Conv2d<T>::init_he(Rng& rng, T gain) {
  fill_normal(weight.value, rng, double(gain) * std::sqrt(2.0 / double(weight.value.cols())));
  bias.value.setZero();
}

template <typename T>
void Conv2d<T>::collect(std::vector<Param<T>*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

template <typename T>
void Conv2d<T>::im2col(const T* img, Matrix<T>& cols) const {
  const int oh = out_.height, ow = out_.width, H = in_.height, W = in_.width;
  cols.resize(Eigen::Index(in_.channels) * kernel_ * kernel_, Eigen::Index(oh) * ow);
  for (int c = 0; c < in_.channels; ++c) {
    const T* plane = img + std::size_t(c) * H * W;
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        T* row = cols.data() + ((c * kernel_ + ky) * kernel_ + kx) * cols.cols();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          T* dst = row + oy * ow;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = plane + std::size_t(iy) * W;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::col2im(const Matrix<T>& cols, T* img) const {
  const int oh = out_.height, ow = out_.width, H = in_.height, W = in_.width;
  std::fill(img, img + std::size_t(in_.channels) * H * W, T(0));
  for (int c = 0; c < in_.channels; ++c) {
    T* plane = img + std::size_t(c) * H * W;
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const T* row = cols.data() + ((c * kernel_ + ky) * kernel_ + kx) * cols.cols();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= H) continue;
          T* dst = plane + std::size_t(iy) * W;
          const T* src = row + oy * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::run(const Matrix<T>& in, Matrix<T>& out,
                    std::vector<Matrix<T>>* cache) const {
  const Eigen::Index n = in.rows();
  const Eigen::Index hw = Eigen::Index(out_.height) * out_.width;
  out.resize(n, out_.size());
  if (cache) cache->resize(std::size_t(n));
  Matrix<T> scratch;
  for (Eigen::Index i = 0; i < n; ++i) {
    Matrix<T>& cols = cache ? (*cache)[std::size_t(i)] : scratch;
    im2col(in.data() + i * in.cols(), cols);
    Eigen::Map<Matrix<T>> o(out.data() + i * out.cols(), out_.channels, hw);
    o.noalias() = weight.value * cols;
    o.colwise() += bias.value.col(0);
  }
}

template <typename T>
void Conv2d<T>::forward(const Matrix<T>& in, Matrix<T>& out) {
  run(in, out, &cols_);
}

template <typename T>
void Conv2d<T>::infer(const Matrix<T>& in, Matrix<T>& out) const {
  run(in, out, nullptr);
}

template <typename T>
void Conv2d<T>::backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) {
  const Eigen::Index n = grad_out.rows();
  const Eigen::Index hw = Eigen::Index(out_.height) * out_.width;
  if (std::size_t(n) != cols_.size()) {
    throw std::logic_error("Conv2d::backward without a matching training forward");
  }
  if (grad_in) grad_in->resize(n, in_.size());
  Matrix<T> dcols;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Map<const Matrix<T>> g(grad_out.data() + i * grad_out.cols(), out_.channels, hw);
    weight.grad.noalias() += g * cols_[std::size_t(i)].transpose();
    bias.grad.col(0) += g.rowwise().sum();
    if (grad_in) {
      dcols.noalias() = weight.value.transpose() * g;
      col2im(dcols, grad_in->data() + i * grad_in->cols());
    }
  }
}

// ---- Linear -----------------------------------------------------------------

template <typename T>
Linear<T>::Linear(std::string name, int in_features, int out_features)
    : weight(name + ".weight", out_features, in_features), bias(name + ".bias", 1, out_features) {}

template <typename T>
void Linear<T>::init_he(Rng& rng, T gain) {
  fill_normal(weight.value, rng, double(gain) * std::sqrt(2.0 / double(weight.value.cols())));
  bias.value.setZero();
}

template <typename T>
void Linear<T>::collect(std::vector<Param<T>*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

template <typename T>
void Linear<T>::forward(const Matrix<T>& in, Matrix<T>& out) {
  input_ = in;
  infer(in, out);
}

template <typename T>
void Linear<T>::infer(const Matrix<T>& in, Matrix<T>& out) const {
  out.noalias() = in * weight.value.transpose();
  out.rowwise() += bias.value.row(0);
}

template <typename T>
void Linear<T>::backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) {
  weight.grad.noalias() += grad_out.transpose() * input_;
  bias.grad.row(0) += grad_out.colwise().sum();
  if (grad_in) grad_in->noalias() = grad_out * weight.value;
}

// ---- ReLU -------------------------------------------------------------------

template <typename T>
void ReLU<T>::forward(const Matrix<T>& in, Matrix<T>& out) {
  out = in.cwiseMax(T(0));
  output_ = out;
}

template <typename T>
void ReLU<T>::infer(const Matrix<T>& in, Matrix<T>& out) const {
  out = in.cwiseMax(T(0));
}

template <typename T>
void ReLU<T>::backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) {
  if (!grad_in) return;
  *grad_in = (output_.array() > T(0)).select(grad_out, T(0));
}

// ---- MaxPool2d --------------------------------------------------------------

template <typename T>
MaxPool2d<T>::MaxPool2d(Shape in, int kernel, int stride, int pad)
    : in_(in),
      out_{in.channels, conv_out(in.height, kernel, stride, pad),
           conv_out(in.width, kernel, stride, pad)},
      kernel_(kernel),
      stride_(stride),
      pad_(pad) {}

template <typename T>
void MaxPool2d<T>::forward(const Matrix<T>& in, Matrix<T>& out) {
  run(in, out, &argmax_);
}

template <typename T>
void MaxPool2d<T>::infer(const Matrix<T>& in, Matrix<T>& out) const {
  run(in, out, nullptr);
}

template <typename T>
void MaxPool2d<T>::run(const Matrix<T>& in, Matrix<T>& out,
                       std::vector<std::vector<std::int32_t>>* argmax) const {
  const Eigen::Index n = in.rows();
  out.resize(n, out_.size());
  if (argmax) argmax->assign(std::size_t(n), std::vector<std::int32_t>(std::size_t(out_.size())));
  for (Eigen::Index i = 0; i < n; ++i) {
    const T* src = in.data() + i * in.cols();
    T* dst = out.data() + i * out.cols();
    for (int c = 0; c < out_.channels; ++c) {
      for (int oy = 0; oy < out_.height; ++oy) {
        for (int ox = 0; ox < out_.width; ++ox) {
          T best = -std::numeric_limits<T>::infinity();
          std::int32_t where = -1;
          for (int ky = 0; ky < kernel_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= in_.height) continue;
            for (int kx = 0; kx < kernel_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= in_.width) continue;
              const std::int32_t idx = (c * in_.height + iy) * in_.width + ix;
              if (src[idx] > best) {
                best = src[idx];
                where = idx;
              }
            }
          }
          const std::size_t o = std::size_t((c * out_.height + oy) * out_.width + ox);
          dst[o] = best;
          if (argmax) (*argmax)[std::size_t(i)][o] = where;
        }
      }
    }
  }
}

template <typename T>
void MaxPool2d<T>::backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) {
  if (!grad_in) return;
  grad_in->setZero(grad_out.rows(), in_.size());
  for (Eigen::Index i = 0; i < grad_out.rows(); ++i) {
    const auto& am = argmax_[std::size_t(i)];
    for (std::size_t o = 0; o < am.size(); ++o) {
      (*grad_in)(i, am[o]) += grad_out(i, Eigen::Index(o));
    }
  }
}

// ---- GlobalAvgPool ----------------------------------------------------------

template <typename T>
void GlobalAvgPool<T>::forward(const Matrix<T>& in, Matrix<T>& out) {
  infer(in, out);
}

template <typename T>
void GlobalAvgPool<T>::infer(const Matrix<T>& in, Matrix<T>& out) const {
  const Eigen::Index hw = Eigen::Index(in_.height) * in_.width;
  out.resize(in.rows(), in_.channels);
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    Eigen::Map<const Matrix<T>> x(in.data() + i * in.cols(), in_.channels, hw);
    out.row(i) = x.rowwise().mean().transpose();
  }
}

template <typename T>
void GlobalAvgPool<T>::backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) {
  if (!grad_in) return;
  const Eigen::Index hw = Eigen::Index(in_.height) * in_.width;
  grad_in->resize(grad_out.rows(), in_.size());
  const T scale = T(1) / T(hw);
  for (Eigen::Index i = 0; i < grad_out.rows(); ++i) {
    Eigen::Map<Matrix<T>> g(grad_in->data() + i * grad_in->cols(), in_.channels, hw);
    g = (grad_out.row(i).transpose() * scale).replicate(1, hw);
  }
}

// ---- HighPass ---------------------------------------------------------------

template <typename T>
void HighPass<T>::infer(const Matrix<T>& in, Matrix<T>& out) const {
  const int h = in_.height, w = in_.width;
  out.resize(in.rows(), in.cols());
  const T ninth = T(1) / T(9);
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    for (int c = 0; c < in_.channels; ++c) {
      const T* x = in.data() + i * in.cols() + Eigen::Index(c) * h * w;
      T* y = out.data() + i * out.cols() + Eigen::Index(c) * h * w;
      for (int r = 0; r < h; ++r) {
        const T* rows[3] = {x + std::max(r - 1, 0) * w, x + r * w, x + std::min(r + 1, h - 1) * w};
        for (int q = 0; q < w; ++q) {
          const int ql = std::max(q - 1, 0), qr = std::min(q + 1, w - 1);
          T sum = 0;
          for (const T* row : rows) sum += row[ql] + row[q] + row[qr];
          y[r * w + q] = gain_ * (x[r * w + q] - sum * ninth);
        }
      }
    }
  }
}

template <typename T>
void HighPass<T>::backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) {
  if (!grad_in) return;
  const int h = in_.height, w = in_.width;
  grad_in->setZero(grad_out.rows(), grad_out.cols());
  const T ninth = T(1) / T(9);
  for (Eigen::Index i = 0; i < grad_out.rows(); ++i) {
    for (int c = 0; c < in_.channels; ++c) {
      const T* g = grad_out.data() + i * grad_out.cols() + Eigen::Index(c) * h * w;
      T* d = grad_in->data() + i * grad_in->cols() + Eigen::Index(c) * h * w;
      for (int r = 0; r < h; ++r) {
        const int rr[3] = {std::max(r - 1, 0), r, std::min(r + 1, h - 1)};
        for (int q = 0; q < w; ++q) {
          const T v = gain_ * g[r * w + q];
          d[r * w + q] += v;
          const int qq[3] = {std::max(q - 1, 0), q, std::min(q + 1, w - 1)};
          for (int a : rr) {
            for (int b : qq) d[a * w + b] -= v * ninth;
          }
        }
      }
    }
  }
}

// ---- Sequential -------------------------------------------------------------

template <typename T>
void Sequential<T>::forward(const Matrix<T>& in, Matrix<T>& out) {
  if (layers_.empty()) {
    out = in;
    return;
  }
  acts_.resize(layers_.size());
  const Matrix<T>* cur = &in;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->forward(*cur, acts_[i]);
    cur = &acts_[i];
  }
  out = acts_.back();
}

template <typename T>
void Sequential<T>::infer(const Matrix<T>& in, Matrix<T>& out) const {
  if (layers_.empty()) {
    out = in;
    return;
  }
  Matrix<T> a = in, b;
  for (const auto& l : layers_) {
    l->infer(a, b);
    a.swap(b);
  }
  out.swap(a);
}

template <typename T>
void Sequential<T>::backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) {
  if (layers_.empty()) {
    if (grad_in) *grad_in = grad_out;
    return;
  }
  Matrix<T> g = grad_out, next;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need = i > 0 || grad_in != nullptr;
    layers_[i]->backward(g, need ? &next : nullptr);
    if (need) g.swap(next);
  }
  if (grad_in) grad_in->swap(g);
}

template <typename T>
void Sequential<T>::collect(std::vector<Param<T>*>& out) {
  for (auto& l : layers_) l->collect(out);
}

// ---- Bottleneck -------------------------------------------------------------

template <typename T>
Bottleneck<T>::Bottleneck(const std::string& name, Shape in, int mid_channels,
                          int out_channels, int stride, Rng& rng)
    : branch_(in) {
  auto& c1 = branch_.add(std::make_unique<Conv2d<T>>(name + ".conv1", in, mid_channels, 1, 1, 0));
  c1.init_he(rng);
  branch_.add(std::make_unique<ReLU<T>>(c1.output_shape()));
  auto& c2 = branch_.add(std::make_unique<Conv2d<T>>(name + ".conv2", c1.output_shape(),
                                                     mid_channels, 3, stride, 1));
  c2.init_he(rng);
  branch_.add(std::make_unique<ReLU<T>>(c2.output_shape()));
  auto& c3 = branch_.add(std::make_unique<Conv2d<T>>(name + ".conv3", c2.output_shape(),
                                                     out_channels, 1, 1, 0));
  c3.weight.value.setZero();
  c3.bias.value.setZero();
  if (stride != 1 || in.channels != out_channels) {
    projection_ = std::make_unique<Conv2d<T>>(name + ".proj", in, out_channels, 1, stride, 0);
    projection_->init_he(rng, T(std::sqrt(0.5)));
  }
}

template <typename T>
void Bottleneck<T>::forward(const Matrix<T>& in, Matrix<T>& out) {
  Matrix<T> branch;
  branch_.forward(in, branch);
  if (projection_) {
    Matrix<T> shortcut;
    projection_->forward(in, shortcut);
    out = (branch + shortcut).cwiseMax(T(0));
  } else {
    out = (branch + in).cwiseMax(T(0));
  }
  output_ = out;
}

template <typename T>
void Bottleneck<T>::infer(const Matrix<T>& in, Matrix<T>& out) const {
  Matrix<T> branch;
  branch_.infer(in, branch);
  if (projection_) {
    Matrix<T> shortcut;
    projection_->infer(in, shortcut);
    out = (branch + shortcut).cwiseMax(T(0));
  } else {
    out = (branch + in).cwiseMax(T(0));
  }
}

template <typename T>
void Bottleneck<T>::backward(const Matrix<T>& grad_out, Matrix<T>* grad_in) {
  Matrix<T> g = (output_.array() > T(0)).select(grad_out, T(0));
  Matrix<T> g_branch;
  branch_.backward(g, grad_in ? &g_branch : nullptr);
  if (projection_) {
    Matrix<T> g_short;
    projection_->backward(g, grad_in ? &g_short : nullptr);
    if (grad_in) *grad_in = g_branch + g_short;
  } else if (grad_in) {
    *grad_in = g_branch + g;
  }
}

template <typename T>
void Bottleneck<T>::collect(std::vector<Param<T>*>& out) {
  branch_.collect(out);
  if (projection_) projection_->collect(out);
}

// ---- Adam -------------------------------------------------------------------

template <typename T>
Adam<T>::Adam(std::vector<Param<T>*> params, double lr, double beta1, double beta2,
              double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto* p : params_) p->grad.setZero();
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  const T step = T(lr_ * std::sqrt(c2) / c1);
  const T b1 = T(beta1_), b2 = T(beta2_), eps = T(eps_ * std::sqrt(c2));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    m_[i] = b1 * m_[i] + (T(1) - b1) * p.grad;
    v_[i] = b2 * v_[i] + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= step * m_[i].array() / (v_[i].array().sqrt() + eps);
  }
}

#define EXIFCONS_INSTANTIATE(T)   \
  template class Conv2d<T>;       \
  template class Linear<T>;       \
  template class ReLU<T>;         \
  template class MaxPool2d<T>;    \
  template class GlobalAvgPool<T>;\
  template class HighPass<T>;     \
  template class Sequential<T>;   \
  template class Bottleneck<T>;   \
  template class Adam<T>;

EXIFCONS_INSTANTIATE(float)
EXIFCONS_INSTANTIATE(double)

#undef EXIFCONS_INSTANTIATE

}  // namespace exifcons::nn
