#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "diffex/nn.hpp"

namespace diffex {

// 2-D convolution with zero padding; w is out_ch x in_ch x k x k, row-major.
struct ConvLayer {
  std::size_t in_ch = 0, out_ch = 0;
  std::size_t kernel = 3, stride = 1, pad = 0;
  std::vector<double> w;
  std::vector<double> b;
  Activation act = Activation::relu;

  std::size_t out_extent(std::size_t in_extent) const {
    return (in_extent + 2 * pad - kernel) / stride + 1;
  }
};

struct ConvTrace {
  // x[0] is the input volume, x[i+1] the post-activation output of layer i.
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> pre;
  std::vector<std::size_t> heights;  // per stage, including input
  std::vector<std::size_t> widths;
};

// Stack of conv layers over a fixed input geometry.
struct ConvNet {
  std::size_t in_ch = 0, in_h = 0, in_w = 0;
  std::vector<ConvLayer> layers;

  bool empty() const { return layers.empty(); }

  std::size_t out_ch() const { return layers.empty() ? in_ch : layers.back().out_ch; }

  void out_extents(std::size_t& h, std::size_t& w) const {
    h = in_h;
    w = in_w;
    for (const ConvLayer& l : layers) {
      h = l.out_extent(h);
      w = l.out_extent(w);
    }
  }

  std::size_t output_size() const {
    std::size_t h, w;
    out_extents(h, w);
    return out_ch() * h * w;
  }

  std::size_t input_size() const { return in_ch * in_h * in_w; }

  void validate() const {
    std::size_t ch = in_ch;
    for (const ConvLayer& l : layers) {
      if (l.in_ch != ch) throw std::invalid_argument("ConvNet: channel mismatch");
      if (l.w.size() != l.out_ch * l.in_ch * l.kernel * l.kernel || l.b.size() != l.out_ch)
        throw std::invalid_argument("ConvNet: parameter size mismatch");
      ch = l.out_ch;
    }
  }

  static void conv_forward(const ConvLayer& l, const std::vector<double>& in, std::size_t h,
                           std::size_t w, std::vector<double>& pre, std::vector<double>& post) {
    const std::size_t oh = l.out_extent(h);
    const std::size_t ow = l.out_extent(w);
    pre.assign(l.out_ch * oh * ow, 0.0);
    post.assign(l.out_ch * oh * ow, 0.0);
    for (std::size_t oc = 0; oc < l.out_ch; ++oc) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double s = l.b[oc];
          for (std::size_t ic = 0; ic < l.in_ch; ++ic) {
            for (std::size_t ky = 0; ky < l.kernel; ++ky) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy * l.stride + ky) - static_cast<std::ptrdiff_t>(l.pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * l.stride + kx) - static_cast<std::ptrdiff_t>(l.pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                s += l.w[((oc * l.in_ch + ic) * l.kernel + ky) * l.kernel + kx] *
                     in[(ic * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
              }
            }
          }
          const std::size_t oi = (oc * oh + oy) * ow + ox;
          pre[oi] = s;
          post[oi] = apply_activation(l.act, s);
        }
      }
    }
  }

  std::vector<double> forward_trace(const std::vector<double>& x, ConvTrace& trace) const {
    if (x.size() != input_size())
      throw std::invalid_argument("ConvNet::forward_trace: input size mismatch");
    trace.x.assign(layers.size() + 1, {});
    trace.pre.assign(layers.size(), {});
    trace.heights.assign(layers.size() + 1, 0);
    trace.widths.assign(layers.size() + 1, 0);
    trace.x[0] = x;
    trace.heights[0] = in_h;
    trace.widths[0] = in_w;
    for (std::size_t li = 0; li < layers.size(); ++li) {
      conv_forward(layers[li], trace.x[li], trace.heights[li], trace.widths[li], trace.pre[li],
                   trace.x[li + 1]);
      trace.heights[li + 1] = layers[li].out_extent(trace.heights[li]);
      trace.widths[li + 1] = layers[li].out_extent(trace.widths[li]);
    }
    return trace.x.back();
  }

  std::vector<double> forward(const std::vector<double>& x) const {
    ConvTrace trace;
    return forward_trace(x, trace);
  }

  GradSet zero_grads() const {
    GradSet g(layers.size());
    for (std::size_t li = 0; li < layers.size(); ++li) {
      g[li].dw.assign(layers[li].w.size(), 0.0);
      g[li].db.assign(layers[li].b.size(), 0.0);
    }
    return g;
  }

  // Reverse pass; accumulates into grads when non-null, returns input cotangent.
  std::vector<double> backward(const ConvTrace& trace, const std::vector<double>& dy,
                               GradSet* grads) const {
    std::vector<double> grad = dy;
    for (std::size_t li = layers.size(); li-- > 0;) {
      const ConvLayer& l = layers[li];
      const std::size_t h = trace.heights[li], w = trace.widths[li];
      const std::size_t oh = trace.heights[li + 1], ow = trace.widths[li + 1];
      const std::vector<double>& in = trace.x[li];
      std::vector<double> dx(l.in_ch * h * w, 0.0);
      for (std::size_t oc = 0; oc < l.out_ch; ++oc) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::size_t oi = (oc * oh + oy) * ow + ox;
            const double g = grad[oi] * activation_derivative(l.act, trace.pre[li][oi]);
            if (g == 0.0) continue;
            if (grads) (*grads)[li].db[oc] += g;
            for (std::size_t ic = 0; ic < l.in_ch; ++ic) {
              for (std::size_t ky = 0; ky < l.kernel; ++ky) {
                const std::ptrdiff_t iy =
                    static_cast<std::ptrdiff_t>(oy * l.stride + ky) - static_cast<std::ptrdiff_t>(l.pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                  const std::ptrdiff_t ix =
                      static_cast<std::ptrdiff_t>(ox * l.stride + kx) - static_cast<std::ptrdiff_t>(l.pad);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  const std::size_t wi = ((oc * l.in_ch + ic) * l.kernel + ky) * l.kernel + kx;
                  const std::size_t xi =
                      (ic * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
                  if (grads) (*grads)[li].dw[wi] += g * in[xi];
                  dx[xi] += g * l.w[wi];
                }
              }
            }
          }
        }
      }
      grad.swap(dx);
    }
    return grad;
  }
};

inline ConvLayer make_conv_layer(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                                 std::size_t stride, std::size_t pad, Activation act, Rng& rng) {
  ConvLayer l;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.kernel = kernel;
  l.stride = stride;
  l.pad = pad;
  l.act = act;
  const std::size_t fan_in = in_ch * kernel * kernel;
  const bool he = act == Activation::relu || act == Activation::softplus;
  const double std = std::sqrt((he ? 2.0 : 1.0) / static_cast<double>(fan_in));
  l.w.resize(out_ch * in_ch * kernel * kernel);
  for (double& v : l.w) v = std * rng.gaussian();
  l.b.assign(out_ch, 0.0);
  return l;
}

}  // namespace diffex
