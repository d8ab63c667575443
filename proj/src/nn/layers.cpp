#include "vfl/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "vfl/core/error.hpp"
#include "vfl/kernels/kernels.hpp"

namespace vfl::nn {
namespace {

Tensor uniform_tensor(Shape shape, float bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (float& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

struct Plane {
  std::size_t channels, height, width;
};

// col[(c*k + ki)*k + kj][oh*out_w + ow] = src[c][oh*s - p + ki][ow*s - p + kj]
void im2col(const float* src, Plane in, const ConvGeometry& g, std::size_t out_h,
            std::size_t out_w, float* col) {
  const std::size_t k = g.kernel;
  const std::size_t positions = out_h * out_w;
  for (std::size_t c = 0; c < in.channels; ++c) {
    const float* plane = src + c * in.height * in.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        float* dst = col + ((c * k + ki) * k + kj) * positions;
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const long ih = long(oh * g.stride + ki) - long(g.padding);
          if (ih < 0 || ih >= long(in.height)) {
            std::fill_n(dst + oh * out_w, out_w, 0.0f);
            continue;
          }
          const float* srow = plane + std::size_t(ih) * in.width;
          for (std::size_t ow = 0; ow < out_w; ++ow) {
            const long iw = long(ow * g.stride + kj) - long(g.padding);
            dst[oh * out_w + ow] = (iw >= 0 && iw < long(in.width)) ? srow[iw] : 0.0f;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into dst.
void col2im(const float* col, Plane in, const ConvGeometry& g, std::size_t out_h,
            std::size_t out_w, float* dst) {
  const std::size_t k = g.kernel;
  const std::size_t positions = out_h * out_w;
  for (std::size_t c = 0; c < in.channels; ++c) {
    float* plane = dst + c * in.height * in.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const float* src = col + ((c * k + ki) * k + kj) * positions;
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const long ih = long(oh * g.stride + ki) - long(g.padding);
          if (ih < 0 || ih >= long(in.height)) continue;
          float* drow = plane + std::size_t(ih) * in.width;
          for (std::size_t ow = 0; ow < out_w; ++ow) {
            const long iw = long(ow * g.stride + kj) - long(g.padding);
            if (iw >= 0 && iw < long(in.width)) drow[iw] += src[oh * out_w + ow];
          }
        }
      }
    }
  }
}

void require_rank4(const Tensor& t, std::size_t channels, const char* who) {
  if (t.rank() != 4 || t.dim(1) != channels)
    throw ConfigError(std::string(who) + ": expected [N," + std::to_string(channels) +
                      ",H,W] input, got " + shape_string(t.shape()));
}

}  // namespace

// ---- Dense ----------------------------------------------------------------

Dense::Dense(std::size_t in_features, std::size_t out_features, Rng& rng)
    : in_(in_features), out_(out_features) {
  const float bound = 1.0f / std::sqrt(float(in_features));
  weight_ = Parameter("weight", uniform_tensor({in_, out_}, bound, rng));
  bias_ = Parameter("bias", uniform_tensor({out_}, bound, rng));
}

Tensor Dense::forward(const Tensor& input, bool) {
  if (input.row_size() != in_)
    throw ConfigError("dense: expected " + std::to_string(in_) + " features per row, got " +
                      shape_string(input.shape()));
  input_ = input;
  const std::size_t n = input.rows();
  Tensor out({n, out_});
  const auto& k = kernels::active();
  k.gemm(n, out_, in_, input.data(), in_, weight_.value.data(), out_, out.data(), out_, false);
  k.add_row_bias(n, out_, bias_.value.data(), out.data());
  return out;
}

Tensor Dense::backward(const Tensor& grad_output) {
  const std::size_t n = input_.rows();
  if (grad_output.rows() != n || grad_output.row_size() != out_)
    throw ConfigError("dense: gradient shape " + shape_string(grad_output.shape()) +
                      " does not match output");
  const auto& k = kernels::active();
  std::vector<float> input_t(in_ * n);
  transpose(n, in_, input_.data(), input_t.data());
  k.gemm(in_, out_, n, input_t.data(), n, grad_output.data(), out_, weight_.grad.data(), out_, true);
  k.column_sums(n, out_, grad_output.data(), bias_.grad.data());

  std::vector<float> weight_t(out_ * in_);
  transpose(in_, out_, weight_.value.data(), weight_t.data());
  Tensor grad_input(input_.shape());
  k.gemm(n, in_, out_, grad_output.data(), out_, weight_t.data(), in_, grad_input.data(), in_, false);
  return grad_input;
}

// ---- Activations ----------------------------------------------------------

Tensor ReLU::forward(const Tensor& input, bool) {
  input_ = input;
  Tensor out(input.shape());
  kernels::active().relu_forward(input.size(), input.data(), out.data());
  return out;
}

Tensor ReLU::backward(const Tensor& grad_output) {
  Tensor grad(input_.shape());
  kernels::active().relu_backward(input_.size(), input_.data(), grad_output.data(), grad.data());
  return grad;
}

Tensor LeakyReLU::forward(const Tensor& input, bool) {
  input_ = input;
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    out[i] = input[i] > 0.0f ? input[i] : slope_ * input[i];
  return out;
}

Tensor LeakyReLU::backward(const Tensor& grad_output) {
  Tensor grad(input_.shape());
  for (std::size_t i = 0; i < grad.size(); ++i)
    grad[i] = input_[i] > 0.0f ? grad_output[i] : slope_ * grad_output[i];
  return grad;
}

Tensor Tanh::forward(const Tensor& input, bool) {
  output_ = Tensor(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) output_[i] = std::tanh(input[i]);
  return output_;
}

Tensor Tanh::backward(const Tensor& grad_output) {
  Tensor grad(output_.shape());
  for (std::size_t i = 0; i < grad.size(); ++i)
    grad[i] = grad_output[i] * (1.0f - output_[i] * output_[i]);
  return grad;
}

Tensor Sigmoid::forward(const Tensor& input, bool) {
  output_ = Tensor(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) output_[i] = 1.0f / (1.0f + std::exp(-input[i]));
  return output_;
}

Tensor Sigmoid::backward(const Tensor& grad_output) {
  Tensor grad(output_.shape());
  for (std::size_t i = 0; i < grad.size(); ++i)
    grad[i] = grad_output[i] * output_[i] * (1.0f - output_[i]);
  return grad;
}

// ---- Shape plumbing -------------------------------------------------------

Tensor Flatten::forward(const Tensor& input, bool) {
  input_shape_ = input.shape();
  return input.reshaped({input.rows(), input.row_size()});
}

Tensor Flatten::backward(const Tensor& grad_output) { return grad_output.reshaped(input_shape_); }

Tensor Reshape::forward(const Tensor& input, bool) {
  input_shape_ = input.shape();
  Shape shape{input.rows()};
  shape.insert(shape.end(), per_sample_.begin(), per_sample_.end());
  return input.reshaped(shape);
}

Tensor Reshape::backward(const Tensor& grad_output) { return grad_output.reshaped(input_shape_); }

// ---- Convolutions ---------------------------------------------------------

std::size_t conv_output_extent(std::size_t input, const ConvGeometry& g) {
  if (input + 2 * g.padding < g.kernel) throw ConfigError("convolution kernel larger than input");
  return (input + 2 * g.padding - g.kernel) / g.stride + 1;
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, ConvGeometry geometry,
               Rng& rng, bool with_bias)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      geometry_(geometry),
      with_bias_(with_bias) {
  const std::size_t fan_in = in_channels * geometry.kernel * geometry.kernel;
  const float bound = 1.0f / std::sqrt(float(fan_in));
  weight_ = Parameter("weight", uniform_tensor({out_channels, fan_in}, bound, rng));
  bias_ = Parameter("bias", with_bias ? uniform_tensor({out_channels}, bound, rng)
                                      : Tensor({out_channels}));
}

std::vector<Parameter*> Conv2d::parameters() {
  if (with_bias_) return {&weight_, &bias_};
  return {&weight_};
}

Tensor Conv2d::forward(const Tensor& input, bool) {
  require_rank4(input, in_channels_, "conv2d");
  input_ = input;
  const std::size_t n = input.dim(0), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = conv_output_extent(h, geometry_), ow = conv_output_extent(w, geometry_);
  const std::size_t ckk = in_channels_ * geometry_.kernel * geometry_.kernel;
  const std::size_t positions = oh * ow;
  Tensor out({n, out_channels_, oh, ow});
  std::vector<float> col(ckk * positions);
  const auto& k = kernels::active();
  for (std::size_t s = 0; s < n; ++s) {
    im2col(input.data() + s * input.row_size(), {in_channels_, h, w}, geometry_, oh, ow, col.data());
    float* dst = out.data() + s * out.row_size();
    k.gemm(out_channels_, positions, ckk, weight_.value.data(), ckk, col.data(), positions, dst,
           positions, false);
    if (with_bias_) {
      for (std::size_t f = 0; f < out_channels_; ++f) {
        const float b = bias_.value[f];
        float* plane = dst + f * positions;
        for (std::size_t p = 0; p < positions; ++p) plane[p] += b;
      }
    }
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_output) {
  const std::size_t n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  const std::size_t oh = conv_output_extent(h, geometry_), ow = conv_output_extent(w, geometry_);
  if (grad_output.shape() != Shape{n, out_channels_, oh, ow})
    throw ConfigError("conv2d: gradient shape mismatch " + shape_string(grad_output.shape()));
  const std::size_t ckk = in_channels_ * geometry_.kernel * geometry_.kernel;
  const std::size_t positions = oh * ow;
  const auto& k = kernels::active();

  std::vector<float> weight_t(ckk * out_channels_);
  transpose(out_channels_, ckk, weight_.value.data(), weight_t.data());
  std::vector<float> col(ckk * positions), col_t(positions * ckk), dcol(ckk * positions);
  Tensor grad_input(input_.shape());
  for (std::size_t s = 0; s < n; ++s) {
    const float* dy = grad_output.data() + s * grad_output.row_size();
    im2col(input_.data() + s * input_.row_size(), {in_channels_, h, w}, geometry_, oh, ow, col.data());
    transpose(ckk, positions, col.data(), col_t.data());
    k.gemm(out_channels_, ckk, positions, dy, positions, col_t.data(), ckk, weight_.grad.data(), ckk, true);
    if (with_bias_) {
      for (std::size_t f = 0; f < out_channels_; ++f) {
        float acc = 0.0f;
        for (std::size_t p = 0; p < positions; ++p) acc += dy[f * positions + p];
        bias_.grad[f] += acc;
      }
    }
    k.gemm(ckk, positions, out_channels_, weight_t.data(), out_channels_, dy, positions, dcol.data(),
           positions, false);
    col2im(dcol.data(), {in_channels_, h, w}, geometry_, oh, ow,
           grad_input.data() + s * grad_input.row_size());
  }
  return grad_input;
}

ConvTranspose2d::ConvTranspose2d(std::size_t in_channels, std::size_t out_channels,
                                 ConvGeometry geometry, std::size_t output_padding_h,
                                 std::size_t output_padding_w, Rng& rng)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      geometry_(geometry),
      output_padding_h_(output_padding_h),
      output_padding_w_(output_padding_w) {
  if (output_padding_h >= geometry.stride || output_padding_w >= geometry.stride)
    throw ConfigError("conv_transpose2d: output padding must be smaller than stride");
  const std::size_t kk = geometry.kernel * geometry.kernel;
  const float bound = 1.0f / std::sqrt(float(out_channels * kk));
  weight_ = Parameter("weight", uniform_tensor({in_channels, out_channels * kk}, bound, rng));
  bias_ = Parameter("bias", uniform_tensor({out_channels}, bound, rng));
}

Tensor ConvTranspose2d::forward(const Tensor& input, bool) {
  require_rank4(input, in_channels_, "conv_transpose2d");
  input_ = input;
  const std::size_t n = input.dim(0), h = input.dim(2), w = input.dim(3);
  const std::size_t s = geometry_.stride, p = geometry_.padding, kernel = geometry_.kernel;
  const long oh_signed = long((h - 1) * s + kernel + output_padding_h_) - long(2 * p);
  const long ow_signed = long((w - 1) * s + kernel + output_padding_w_) - long(2 * p);
  if (oh_signed <= 0 || ow_signed <= 0) throw ConfigError("conv_transpose2d: empty output");
  const std::size_t oh = std::size_t(oh_signed), ow = std::size_t(ow_signed);
  const std::size_t ckk = out_channels_ * kernel * kernel;
  const std::size_t positions = h * w;
  const auto& k = kernels::active();

  std::vector<float> weight_t(ckk * in_channels_);
  transpose(in_channels_, ckk, weight_.value.data(), weight_t.data());
  std::vector<float> col(ckk * positions);
  Tensor out({n, out_channels_, oh, ow});
  for (std::size_t b = 0; b < n; ++b) {
    k.gemm(ckk, positions, in_channels_, weight_t.data(), in_channels_,
           input.data() + b * input.row_size(), positions, col.data(), positions, false);
    float* dst = out.data() + b * out.row_size();
    col2im(col.data(), {out_channels_, oh, ow}, geometry_, h, w, dst);
    for (std::size_t f = 0; f < out_channels_; ++f) {
      const float bias = bias_.value[f];
      float* plane = dst + f * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i) plane[i] += bias;
    }
  }
  return out;
}

Tensor ConvTranspose2d::backward(const Tensor& grad_output) {
  const std::size_t n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  if (grad_output.rank() != 4 || grad_output.dim(0) != n || grad_output.dim(1) != out_channels_)
    throw ConfigError("conv_transpose2d: gradient shape mismatch " +
                      shape_string(grad_output.shape()));
  const std::size_t oh = grad_output.dim(2), ow = grad_output.dim(3);
  const std::size_t kernel = geometry_.kernel;
  const std::size_t ckk = out_channels_ * kernel * kernel;
  const std::size_t positions = h * w;
  const auto& k = kernels::active();

  std::vector<float> dcol(ckk * positions), dcol_t(positions * ckk);
  Tensor grad_input(input_.shape());
  for (std::size_t b = 0; b < n; ++b) {
    const float* dy = grad_output.data() + b * grad_output.row_size();
    im2col(dy, {out_channels_, oh, ow}, geometry_, h, w, dcol.data());
    k.gemm(in_channels_, positions, ckk, weight_.value.data(), ckk, dcol.data(), positions,
           grad_input.data() + b * grad_input.row_size(), positions, false);
    transpose(ckk, positions, dcol.data(), dcol_t.data());
    k.gemm(in_channels_, ckk, positions, input_.data() + b * input_.row_size(), positions,
           dcol_t.data(), ckk, weight_.grad.data(), ckk, true);
    for (std::size_t f = 0; f < out_channels_; ++f) {
      float acc = 0.0f;
      for (std::size_t i = 0; i < oh * ow; ++i) acc += dy[f * oh * ow + i];
      bias_.grad[f] += acc;
    }
  }
  return grad_input;
}

// ---- BatchNorm ------------------------------------------------------------

BatchNorm::BatchNorm(std::size_t channels, float momentum, float eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_("gamma", Tensor({channels}, 1.0f)),
      beta_("beta", Tensor({channels}, 0.0f)),
      running_mean_({channels}, 0.0f),
      running_var_({channels}, 1.0f) {}

Tensor BatchNorm::forward(const Tensor& input, bool training) {
  if (input.rank() < 2 || input.dim(1) != channels_)
    throw ConfigError("batch_norm: channel mismatch for " + shape_string(input.shape()));
  input_shape_ = input.shape();
  const std::size_t n = input.dim(0);
  const std::size_t spatial = input.row_size() / channels_;
  const std::size_t count = n * spatial;
  inv_std_.assign(channels_, 0.0f);
  normalized_ = Tensor(input.shape());
  Tensor out(input.shape());
  trained_batch_ = training && count > 1;
  for (std::size_t c = 0; c < channels_; ++c) {
    float mean, var;
    if (trained_batch_) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const float* x = input.data() + (b * channels_ + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) sum += x[i];
      }
      mean = float(sum / double(count));
      for (std::size_t b = 0; b < n; ++b) {
        const float* x = input.data() + (b * channels_ + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) sq += double(x[i] - mean) * double(x[i] - mean);
      }
      var = float(sq / double(count));
      running_mean_[c] = (1.0f - momentum_) * running_mean_[c] + momentum_ * mean;
      const float unbiased = float(sq / double(count - 1));
      running_var_[c] = (1.0f - momentum_) * running_var_[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const float inv_std = 1.0f / std::sqrt(var + eps_);
    inv_std_[c] = inv_std;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t offset = (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        const float xhat = (input[offset + i] - mean) * inv_std;
        normalized_[offset + i] = xhat;
        out[offset + i] = gamma_.value[c] * xhat + beta_.value[c];
      }
    }
  }
  return out;
}

Tensor BatchNorm::backward(const Tensor& grad_output) {
  const std::size_t n = input_shape_[0];
  const std::size_t spatial = shape_size(input_shape_) / (n * channels_);
  const double count = double(n * spatial);
  Tensor grad(input_shape_);
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t offset = (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        sum_dy += grad_output[offset + i];
        sum_dy_xhat += double(grad_output[offset + i]) * normalized_[offset + i];
      }
    }
    gamma_.grad[c] += float(sum_dy_xhat);
    beta_.grad[c] += float(sum_dy);
    const float scale = gamma_.value[c] * inv_std_[c];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t offset = (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        if (trained_batch_) {
          const double centered = double(grad_output[offset + i]) - sum_dy / count -
                                  double(normalized_[offset + i]) * sum_dy_xhat / count;
          grad[offset + i] = float(scale * centered);
        } else {
          grad[offset + i] = scale * grad_output[offset + i];
        }
      }
    }
  }
  return grad;
}

// ---- Pooling / residual ---------------------------------------------------

Tensor GlobalAvgPool::forward(const Tensor& input, bool) {
  if (input.rank() != 4) throw ConfigError("global_avg_pool: expected NCHW input");
  input_shape_ = input.shape();
  const std::size_t n = input.dim(0), c = input.dim(1), spatial = input.dim(2) * input.dim(3);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    float acc = 0.0f;
    for (std::size_t p = 0; p < spatial; ++p) acc += input[i * spatial + p];
    out[i] = acc / float(spatial);
  }
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_output) {
  Tensor grad(input_shape_);
  const std::size_t spatial = input_shape_[2] * input_shape_[3];
  for (std::size_t i = 0; i < grad_output.size(); ++i) {
    const float g = grad_output[i] / float(spatial);
    for (std::size_t p = 0; p < spatial; ++p) grad[i * spatial + p] = g;
  }
  return grad;
}

ResidualBlock::ResidualBlock(std::size_t in_channels, std::size_t out_channels,
                             std::size_t stride, Rng& rng) {
  main_.add(std::make_unique<Conv2d>(in_channels, out_channels, ConvGeometry{3, stride, 1}, rng, false))
      .add(std::make_unique<BatchNorm>(out_channels))
      .add(std::make_unique<ReLU>())
      .add(std::make_unique<Conv2d>(out_channels, out_channels, ConvGeometry{3, 1, 1}, rng, false))
      .add(std::make_unique<BatchNorm>(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    shortcut_.add(std::make_unique<Conv2d>(in_channels, out_channels, ConvGeometry{1, stride, 0}, rng, false))
        .add(std::make_unique<BatchNorm>(out_channels));
  }
}

Tensor ResidualBlock::forward(const Tensor& input, bool training) {
  Tensor main = main_.forward(input, training);
  Tensor skip = shortcut_.size() ? shortcut_.forward(input, training) : input;
  if (main.shape() != skip.shape()) throw ConfigError("residual_block: branch shape mismatch");
  for (std::size_t i = 0; i < main.size(); ++i) main[i] += skip[i];
  sum_ = main;
  Tensor out(main.shape());
  kernels::active().relu_forward(main.size(), main.data(), out.data());
  return out;
}

Tensor ResidualBlock::backward(const Tensor& grad_output) {
  Tensor grad_sum(sum_.shape());
  kernels::active().relu_backward(sum_.size(), sum_.data(), grad_output.data(), grad_sum.data());
  Tensor grad = main_.backward(grad_sum);
  if (shortcut_.size()) {
    Tensor skip = shortcut_.backward(grad_sum);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += skip[i];
  } else {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += grad_sum[i];
  }
  return grad;
}

std::vector<Parameter*> ResidualBlock::parameters() {
  auto ps = main_.parameters();
  auto sc = shortcut_.parameters();
  ps.insert(ps.end(), sc.begin(), sc.end());
  return ps;
}

std::vector<Tensor*> ResidualBlock::buffers() {
  auto bs = main_.buffers();
  auto sc = shortcut_.buffers();
  bs.insert(bs.end(), sc.begin(), sc.end());
  return bs;
}

}  // namespace vfl::nn
