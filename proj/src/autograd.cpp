#include "yffn/autograd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "yffn/common.hpp"

namespace yffn {

Tape::VarId Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr});
  return nodes_.size() - 1;
}

Tape::VarId Tape::node(Tensor value, std::vector<VarId> parents, VjpFn vjp) {
  if (!recording_) {
    nodes_.push_back(Node{std::move(value), {}, nullptr});
  } else {
    for (VarId p : parents) check_id(p, "parent");
    nodes_.push_back(Node{std::move(value), std::move(parents), std::move(vjp)});
  }
  return nodes_.size() - 1;
}

const Tensor& Tape::value(VarId id) const {
  check_id(id, "variable");
  return nodes_[id].value;
}

void Tape::check_id(VarId id, const char* what) const {
  if (id >= nodes_.size()) {
    throw std::invalid_argument(detail::cat(what, " id ", id, " is not on this tape (",
                                            nodes_.size(), " recorded)"));
  }
}

std::vector<Tensor> Tape::adjoints(VarId loss) const {
  check_id(loss, "loss");
  if (!recording_) {
    throw std::logic_error("gradient requested from a non-recording tape");
  }
  if (nodes_[loss].value.size() != 1) {
    throw std::invalid_argument(detail::cat("loss must be scalar, got shape ",
                                            nodes_[loss].value.shape_str()));
  }

  std::vector<Tensor> adj(nodes_.size());
  adj[loss] = Tensor(nodes_[loss].value.shape(), {1.0});
  for (VarId id = loss + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (adj[id].size() == 0 || !n.vjp) continue;
    std::vector<Tensor> parent_grads = n.vjp(adj[id]);
    if (parent_grads.size() != n.parents.size()) {
      throw std::logic_error("vjp returned wrong number of gradients");
    }
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      Tensor& slot = adj[n.parents[i]];
      if (slot.size() == 0) {
        slot = std::move(parent_grads[i]);
      } else {
        slot = yffn::add(slot, parent_grads[i]);
      }
    }
  }
  return adj;
}

Tensor Tape::gradient(VarId loss, VarId wrt) const {
  check_id(wrt, "wrt");
  std::vector<Tensor> adj = adjoints(loss);
  if (adj[wrt].size() == 0) return Tensor::zeros(nodes_[wrt].value.shape());
  return adj[wrt];
}

std::vector<Tensor> Tape::gradients(VarId loss, const std::vector<VarId>& wrt) const {
  for (VarId id : wrt) check_id(id, "wrt");
  std::vector<Tensor> adj = adjoints(loss);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (VarId id : wrt) {
    out.push_back(adj[id].size() == 0 ? Tensor::zeros(nodes_[id].value.shape()) : adj[id]);
  }
  return out;
}

namespace ad {

VarId conv2d(Tape& t, VarId input, VarId kernels, int stride, int padding, VarId bias) {
  const Tensor& x = t.value(input);
  const Tensor& k = t.value(kernels);
  const Tensor& b = t.value(bias);
  Tensor y = yffn::conv2d(x, k, stride, padding, b);
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  Tensor xs = x, ks = k;
  return t.node(std::move(y), {input, kernels, bias},
                [xs, ks, stride, padding](const Tensor& g) -> std::vector<Tensor> {
                  const int w = xs.extent(0), h = xs.extent(1), cin = xs.extent(2);
                  const int kk = ks.extent(0), cout = ks.extent(3);
                  const int ow = g.extent(0), oh = g.extent(1);
                  Tensor gx(xs.shape()), gk(ks.shape()), gb({cout});
                  for (int ox = 0; ox < ow; ++ox) {
                    for (int oy = 0; oy < oh; ++oy) {
                      for (int co = 0; co < cout; ++co) {
                        const double go = g.at(ox, oy, co);
                        gb[co] += go;
                        for (int dx = 0; dx < kk; ++dx) {
                          const int ix = ox * stride - padding + dx;
                          if (ix < 0 || ix >= w) continue;
                          for (int dy = 0; dy < kk; ++dy) {
                            const int iy = oy * stride - padding + dy;
                            if (iy < 0 || iy >= h) continue;
                            for (int ci = 0; ci < cin; ++ci) {
                              gx.at(ix, iy, ci) += go * ks.at(dx, dy, ci, co);
                              gk.at(dx, dy, ci, co) += go * xs.at(ix, iy, ci);
                            }
                          }
                        }
                      }
                    }
                  }
                  return {std::move(gx), std::move(gk), std::move(gb)};
                });
}

VarId batch_norm_inference(Tape& t, VarId input, VarId mean, VarId var, VarId gamma, VarId beta,
                           double eps) {
  const Tensor& x = t.value(input);
  Tensor y = yffn::batch_norm_inference(x, t.value(mean), t.value(var), t.value(gamma),
                                        t.value(beta), eps);
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  Tensor xs = x, ms = t.value(mean), vs = t.value(var), gs = t.value(gamma);
  return t.node(std::move(y), {input, mean, var, gamma, beta},
                [xs, ms, vs, gs, eps](const Tensor& g) -> std::vector<Tensor> {
                  const int c = xs.extent(2);
                  Tensor gx(xs.shape()), gmean({c}), gvar({c}), ggamma({c}), gbeta({c});
                  std::vector<double> inv_std(c);
                  for (int i = 0; i < c; ++i) inv_std[i] = 1.0 / std::sqrt(vs[i] + eps);
                  const std::size_t n = xs.size();
                  for (std::size_t i = 0; i < n; ++i) {
                    const int ch = static_cast<int>(i % c);
                    const double centered = xs[i] - ms[ch];
                    const double go = g[i];
                    gx[i] = go * gs[ch] * inv_std[ch];
                    gmean[ch] -= go * gs[ch] * inv_std[ch];
                    gvar[ch] += go * centered * gs[ch] * (-0.5) * inv_std[ch] * inv_std[ch] *
                                inv_std[ch];
                    ggamma[ch] += go * centered * inv_std[ch];
                    gbeta[ch] += go;
                  }
                  return {std::move(gx), std::move(gmean), std::move(gvar), std::move(ggamma),
                          std::move(gbeta)};
                });
}

VarId silu(Tape& t, VarId input) {
  const Tensor& x = t.value(input);
  Tensor y = yffn::silu(x);
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  Tensor xs = x;
  return t.node(std::move(y), {input}, [xs](const Tensor& g) -> std::vector<Tensor> {
    Tensor gx(xs.shape());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double s = yffn::sigmoid(xs[i]);
      gx[i] = g[i] * (s + xs[i] * s * (1.0 - s));
    }
    return {std::move(gx)};
  });
}

VarId sigmoid(Tape& t, VarId input) {
  Tensor y = yffn::sigmoid(t.value(input));
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  Tensor ys = y;
  return t.node(std::move(y), {input}, [ys](const Tensor& g) -> std::vector<Tensor> {
    Tensor gx(ys.shape());
    for (std::size_t i = 0; i < ys.size(); ++i) gx[i] = g[i] * ys[i] * (1.0 - ys[i]);
    return {std::move(gx)};
  });
}

VarId relu(Tape& t, VarId input) {
  const Tensor& x = t.value(input);
  Tensor y = yffn::relu(x);
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  Tensor xs = x;
  return t.node(std::move(y), {input}, [xs](const Tensor& g) -> std::vector<Tensor> {
    Tensor gx(xs.shape());
    for (std::size_t i = 0; i < xs.size(); ++i) gx[i] = xs[i] > 0.0 ? g[i] : 0.0;
    return {std::move(gx)};
  });
}

namespace {

// Shared by pool2d/global_pool max paths: first maximum in scan order wins,
// matching the forward scan so routing is stable under replay.
struct WindowMax {
  int x = -1, y = -1;
  double v = -std::numeric_limits<double>::infinity();
};

}  // namespace

VarId pool2d(Tape& t, VarId input, PoolKind kind, int k, int stride, int padding) {
  const Tensor& x = t.value(input);
  Tensor y = yffn::pool2d(x, kind, k, stride, padding);
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  Tensor xs = x;
  return t.node(std::move(y), {input},
                [xs, kind, k, stride, padding](const Tensor& g) -> std::vector<Tensor> {
                  const int w = xs.extent(0), h = xs.extent(1), c = xs.extent(2);
                  const int ow = g.extent(0), oh = g.extent(1);
                  Tensor gx(xs.shape());
                  for (int ox = 0; ox < ow; ++ox) {
                    for (int oy = 0; oy < oh; ++oy) {
                      for (int ch = 0; ch < c; ++ch) {
                        const double go = g.at(ox, oy, ch);
                        if (kind == PoolKind::Max) {
                          WindowMax m;
                          for (int dx = 0; dx < k; ++dx) {
                            const int ix = ox * stride - padding + dx;
                            if (ix < 0 || ix >= w) continue;
                            for (int dy = 0; dy < k; ++dy) {
                              const int iy = oy * stride - padding + dy;
                              if (iy < 0 || iy >= h) continue;
                              if (xs.at(ix, iy, ch) > m.v) m = {ix, iy, xs.at(ix, iy, ch)};
                            }
                          }
                          gx.at(m.x, m.y, ch) += go;
                        } else {
                          const double share = go / (static_cast<double>(k) * k);
                          for (int dx = 0; dx < k; ++dx) {
                            const int ix = ox * stride - padding + dx;
                            if (ix < 0 || ix >= w) continue;
                            for (int dy = 0; dy < k; ++dy) {
                              const int iy = oy * stride - padding + dy;
                              if (iy < 0 || iy >= h) continue;
                              gx.at(ix, iy, ch) += share;
                            }
                          }
                        }
                      }
                    }
                  }
                  return {std::move(gx)};
                });
}

VarId global_pool(Tape& t, VarId input, PoolKind kind) {
  const Tensor& x = t.value(input);
  Tensor y = yffn::global_pool(x, kind);
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  Tensor xs = x;
  return t.node(std::move(y), {input}, [xs, kind](const Tensor& g) -> std::vector<Tensor> {
    const int w = xs.extent(0), h = xs.extent(1), c = xs.extent(2);
    Tensor gx(xs.shape());
    for (int ch = 0; ch < c; ++ch) {
      const double go = g.at(0, 0, ch);
      if (kind == PoolKind::Max) {
        WindowMax m;
        for (int xx = 0; xx < w; ++xx)
          for (int yy = 0; yy < h; ++yy)
            if (xs.at(xx, yy, ch) > m.v) m = {xx, yy, xs.at(xx, yy, ch)};
        gx.at(m.x, m.y, ch) += go;
      } else {
        const double share = go / (static_cast<double>(w) * h);
        for (int xx = 0; xx < w; ++xx)
          for (int yy = 0; yy < h; ++yy) gx.at(xx, yy, ch) += share;
      }
    }
    return {std::move(gx)};
  });
}

VarId channel_pool(Tape& t, VarId input, PoolKind kind) {
  const Tensor& x = t.value(input);
  Tensor y = yffn::channel_pool(x, kind);
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  Tensor xs = x;
  return t.node(std::move(y), {input}, [xs, kind](const Tensor& g) -> std::vector<Tensor> {
    const int w = xs.extent(0), h = xs.extent(1), c = xs.extent(2);
    Tensor gx(xs.shape());
    for (int xx = 0; xx < w; ++xx) {
      for (int yy = 0; yy < h; ++yy) {
        const double go = g.at(xx, yy, 0);
        if (kind == PoolKind::Max) {
          int best = 0;
          for (int ch = 1; ch < c; ++ch)
            if (xs.at(xx, yy, ch) > xs.at(xx, yy, best)) best = ch;
          gx.at(xx, yy, best) += go;
        } else {
          for (int ch = 0; ch < c; ++ch) gx.at(xx, yy, ch) += go / c;
        }
      }
    }
    return {std::move(gx)};
  });
}

VarId upsample_nearest(Tape& t, VarId input, int factor) {
  const Tensor& x = t.value(input);
  Tensor y = yffn::upsample_nearest(x, factor);
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  std::vector<int> in_shape = x.shape();
  return t.node(std::move(y), {input}, [in_shape, factor](const Tensor& g) -> std::vector<Tensor> {
    Tensor gx(in_shape);
    const int w = in_shape[0], h = in_shape[1], c = in_shape[2];
    for (int xx = 0; xx < w * factor; ++xx)
      for (int yy = 0; yy < h * factor; ++yy)
        for (int ch = 0; ch < c; ++ch) gx.at(xx / factor, yy / factor, ch) += g.at(xx, yy, ch);
    return {std::move(gx)};
  });
}

VarId concat_channels(Tape& t, VarId a, VarId b) {
  const Tensor& ta = t.value(a);
  const Tensor& tb = t.value(b);
  Tensor y = yffn::concat_channels(ta, tb);
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  std::vector<int> sa = ta.shape(), sb = tb.shape();
  return t.node(std::move(y), {a, b}, [sa, sb](const Tensor& g) -> std::vector<Tensor> {
    Tensor ga(sa), gb(sb);
    const int w = sa[0], h = sa[1], ca = sa[2], cb = sb[2];
    for (int x = 0; x < w; ++x) {
      for (int y2 = 0; y2 < h; ++y2) {
        for (int c = 0; c < ca; ++c) ga.at(x, y2, c) = g.at(x, y2, c);
        for (int c = 0; c < cb; ++c) gb.at(x, y2, c) = g.at(x, y2, ca + c);
      }
    }
    return {std::move(ga), std::move(gb)};
  });
}

VarId broadcast_mul(Tape& t, VarId map, VarId feature) {
  const Tensor& m = t.value(map);
  const Tensor& f = t.value(feature);
  Tensor y = yffn::broadcast_mul(m, f);
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  Tensor ms = m, fs = f;
  return t.node(std::move(y), {map, feature}, [ms, fs](const Tensor& g) -> std::vector<Tensor> {
    const int w = fs.extent(0), h = fs.extent(1), c = fs.extent(2);
    Tensor gm(ms.shape()), gf(fs.shape());
    const bool channel_map =
        ms.extent(0) == 1 && ms.extent(1) == 1 && ms.extent(2) == c;
    for (int x = 0; x < w; ++x) {
      for (int y2 = 0; y2 < h; ++y2) {
        for (int ch = 0; ch < c; ++ch) {
          const double go = g.at(x, y2, ch);
          if (channel_map) {
            gf.at(x, y2, ch) = go * ms.at(0, 0, ch);
            gm.at(0, 0, ch) += go * fs.at(x, y2, ch);
          } else {
            gf.at(x, y2, ch) = go * ms.at(x, y2, 0);
            gm.at(x, y2, 0) += go * fs.at(x, y2, ch);
          }
        }
      }
    }
    return {std::move(gm), std::move(gf)};
  });
}

VarId add(Tape& t, VarId a, VarId b) {
  Tensor y = yffn::add(t.value(a), t.value(b));
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);
  return t.node(std::move(y), {a, b},
                [](const Tensor& g) -> std::vector<Tensor> { return {g, g}; });
}

VarId mul(Tape& t, VarId a, VarId b) {
  const Tensor& ta = t.value(a);
  const Tensor& tb = t.value(b);
  Tensor y = yffn::mul(ta, tb);
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  Tensor as = ta, bs = tb;
  return t.node(std::move(y), {a, b}, [as, bs](const Tensor& g) -> std::vector<Tensor> {
    return {yffn::mul(g, bs), yffn::mul(g, as)};
  });
}

VarId scale(Tape& t, VarId a, double s) {
  Tensor y = yffn::scale(t.value(a), s);
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);
  return t.node(std::move(y), {a},
                [s](const Tensor& g) -> std::vector<Tensor> { return {yffn::scale(g, s)}; });
}

VarId dense(Tape& t, VarId input, VarId weights, VarId bias) {
  const Tensor& x = t.value(input);
  const Tensor& w = t.value(weights);
  Tensor y = yffn::dense(x, w, t.value(bias));
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  Tensor xs = x, ws = w;
  return t.node(std::move(y), {input, weights, bias},
                [xs, ws](const Tensor& g) -> std::vector<Tensor> {
                  const int cin = ws.extent(0), cout = ws.extent(1);
                  Tensor gx(xs.shape()), gw(ws.shape()), gb({cout});
                  for (int j = 0; j < cout; ++j) {
                    const double go = g[j];
                    gb[j] = go;
                    for (int i = 0; i < cin; ++i) {
                      gx[i] += go * ws.at(i, j);
                      gw.at(i, j) = go * xs[i];
                    }
                  }
                  return {std::move(gx), std::move(gw), std::move(gb)};
                });
}

VarId sum(Tape& t, VarId a) {
  const Tensor& x = t.value(a);
  Tensor y = Tensor::scalar(yffn::sum(x));
  if (!t.recording()) return t.node(std::move(y), {}, nullptr);

  std::vector<int> shape = x.shape();
  return t.node(std::move(y), {a}, [shape](const Tensor& g) -> std::vector<Tensor> {
    return {Tensor::full(shape, g[0])};
  });
}

}  // namespace ad

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite difference step must be > 0");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double hi = f(probe);
    probe[i] = orig - step;
    const double lo = f(probe);
    probe[i] = orig;
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

}  // namespace yffn
