#include "vfl/attack/generator.hpp"

#include <cstring>

#include "vfl/core/error.hpp"
#include "vfl/nn/layers.hpp"

namespace vfl::attack {
namespace {

constexpr nn::ConvGeometry kDown{3, 2, 1};

// Output padding that makes a stride-2 transposed conv map `from` back to `to`.
std::size_t output_padding(std::size_t from, std::size_t to) {
  const long base = (long(from) - 1) * 2 - 2 + 3;
  const long pad = long(to) - base;
  if (pad < 0 || pad > 1) throw ConfigError("generator cannot mirror extent " + std::to_string(to));
  return std::size_t(pad);
}

}  // namespace

std::size_t downsampled(std::size_t extent) { return nn::conv_output_extent(extent, kDown); }

PerturbationGenerator::PerturbationGenerator(const data::Geometry& geometry, std::size_t noise_dim,
                                             float scale, Rng& rng, std::size_t width)
    : geometry_(geometry), noise_dim_(noise_dim), scale_(scale) {
  const std::size_t code_channels = 4 * width;
  if (geometry.is_image()) {
    const std::size_t c = geometry.channels;
    std::size_t h[4] = {geometry.height}, w[4] = {geometry.width};
    for (int i = 1; i < 4; ++i) {
      h[i] = downsampled(h[i - 1]);
      w[i] = downsampled(w[i - 1]);
    }
    const std::size_t ch[4] = {c, width, 2 * width, 4 * width};
    for (int i = 0; i < 3; ++i)
      encoder_.add(std::make_unique<nn::Conv2d>(ch[i], ch[i + 1], kDown, rng))
          .add(std::make_unique<nn::LeakyReLU>(0.2f));
    code_shape_ = {code_channels, h[3], w[3]};
    std::size_t in = code_channels + noise_dim;
    for (int i = 3; i > 0; --i) {
      decoder_.add(std::make_unique<nn::ConvTranspose2d>(in, ch[i - 1], kDown,
                                                         output_padding(h[i], h[i - 1]),
                                                         output_padding(w[i], w[i - 1]), rng));
      if (i > 1) decoder_.add(std::make_unique<nn::ReLU>());
      in = ch[i - 1];
    }
  } else {
    const std::size_t d = geometry.features();
    encoder_.add(std::make_unique<nn::Dense>(d, 2 * width, rng)).add(std::make_unique<nn::LeakyReLU>(0.2f))
        .add(std::make_unique<nn::Dense>(2 * width, code_channels, rng))
        .add(std::make_unique<nn::LeakyReLU>(0.2f));
    code_shape_ = {code_channels};
    decoder_.add(std::make_unique<nn::Dense>(code_channels + noise_dim, 2 * width, rng))
        .add(std::make_unique<nn::ReLU>())
        .add(std::make_unique<nn::Dense>(2 * width, d, rng));
  }
  decoder_.add(std::make_unique<nn::Tanh>());
}

Tensor PerturbationGenerator::forward(const Tensor& x, const Tensor& z, bool training) {
  const std::size_t n = x.rows();
  if (z.rows() != n || z.row_size() != noise_dim_)
    throw ValidationError("noise must be [" + std::to_string(n) + ", " + std::to_string(noise_dim_) + "]");
  input_shape_ = x.shape();
  Shape enc_in{n};
  if (geometry_.is_image()) enc_in.insert(enc_in.end(), {geometry_.channels, geometry_.height, geometry_.width});
  else enc_in.push_back(geometry_.features());
  const Tensor code = encoder_.forward(x.reshaped(enc_in), training);

  // Tile each noise coordinate over the code's spatial positions as an
  // extra channel.
  const std::size_t spatial = shape_size(code_shape_) / code_shape_[0];
  const std::size_t code_size = code.row_size();
  Shape joined_shape{n, code_shape_[0] + noise_dim_};
  joined_shape.insert(joined_shape.end(), code_shape_.begin() + 1, code_shape_.end());
  Tensor joined(joined_shape);
  const std::size_t row = joined.row_size();
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(joined.data() + i * row, code.data() + i * code_size, code_size * sizeof(float));
    float* dst = joined.data() + i * row + code_size;
    for (std::size_t k = 0; k < noise_dim_; ++k)
      std::fill(dst + k * spatial, dst + (k + 1) * spatial, z[i * noise_dim_ + k]);
  }
  Tensor out = decoder_.forward(joined, training).reshaped(input_shape_);
  for (float& v : out.values()) v *= scale_;
  return out;
}

void PerturbationGenerator::backward(const Tensor& grad_output) {
  const std::size_t n = grad_output.rows();
  Tensor g = grad_output;
  for (float& v : g.values()) v *= scale_;
  Shape dec_out{n};
  if (geometry_.is_image()) dec_out.insert(dec_out.end(), {geometry_.channels, geometry_.height, geometry_.width});
  else dec_out.push_back(geometry_.features());
  const Tensor grad_joined = decoder_.backward(std::move(g).reshaped(dec_out));
  const std::size_t code_size = shape_size(code_shape_);
  Shape code_batch{n};
  code_batch.insert(code_batch.end(), code_shape_.begin(), code_shape_.end());
  Tensor grad_code(code_batch);
  const std::size_t row = grad_joined.row_size();
  for (std::size_t i = 0; i < n; ++i)
    std::memcpy(grad_code.data() + i * code_size, grad_joined.data() + i * row, code_size * sizeof(float));
  (void)encoder_.backward(grad_code);
}

std::vector<nn::Parameter*> PerturbationGenerator::parameters() {
  auto p = encoder_.parameters();
  for (nn::Parameter* q : decoder_.parameters()) p.push_back(q);
  return p;
}

std::vector<Tensor*> PerturbationGenerator::buffers() {
  auto b = encoder_.buffers();
  for (Tensor* q : decoder_.buffers()) b.push_back(q);
  return b;
}

nn::Sequential make_discriminator(const data::Geometry& geometry, Rng& rng, std::size_t width) {
  nn::Sequential d;
  if (geometry.is_image()) {
    const std::size_t h = downsampled(downsampled(geometry.height));
    const std::size_t w = downsampled(downsampled(geometry.width));
    d.add(std::make_unique<nn::Conv2d>(geometry.channels, width, kDown, rng))
        .add(std::make_unique<nn::LeakyReLU>(0.2f))
        .add(std::make_unique<nn::Conv2d>(width, 2 * width, kDown, rng))
        .add(std::make_unique<nn::LeakyReLU>(0.2f))
        .add(std::make_unique<nn::Flatten>())
        .add(std::make_unique<nn::Dense>(2 * width * h * w, 1, rng));
  } else {
    d.add(std::make_unique<nn::Dense>(geometry.features(), 2 * width, rng))
        .add(std::make_unique<nn::LeakyReLU>(0.2f))
        .add(std::make_unique<nn::Dense>(2 * width, width, rng))
        .add(std::make_unique<nn::LeakyReLU>(0.2f))
        .add(std::make_unique<nn::Dense>(width, 1, rng));
  }
  return d;
}

}  // namespace vfl::attack
