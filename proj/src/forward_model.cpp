#include "bsr/forward_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bsr/error.hpp"

namespace bsr {

BlurKernel BlurKernel::box(int s) {
  if (s < 1) throw ParameterError("BlurKernel::box: width must be >= 1");
  BlurKernel k;
  if (s % 2 == 1) {
    k.taps.assign(static_cast<std::size_t>(s), 1.0 / s);
  } else {
    k.taps.assign(static_cast<std::size_t>(s) + 1, 1.0 / s);
    k.taps.front() = k.taps.back() = 0.5 / s;
  }
  return k;
}

BlurKernel BlurKernel::gaussian(double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("BlurKernel::gaussian: sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  BlurKernel k;
  k.taps.resize(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k.taps[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double sum = std::accumulate(k.taps.begin(), k.taps.end(), 0.0);
  for (double& t : k.taps) t /= sum;
  return k;
}

void BlurKernel::validate() const {
  if (taps.empty() || taps.size() % 2 == 0) throw ParameterError("blur kernel needs odd length");
  const double sum = std::accumulate(taps.begin(), taps.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("blur kernel taps must sum to 1");
}

ObservationModel ObservationModel::make(int lr_rows, int lr_cols, int sr_factor, CfaPattern cfa) {
  ObservationModel m;
  m.kernel = BlurKernel::box(sr_factor);
  m.sr_factor = sr_factor;
  m.cfa = cfa;
  m.lr_rows = lr_rows;
  m.lr_cols = lr_cols;
  m.validate();
  return m;
}

Vec2 ObservationModel::hr_center() const {
  const Vec2 c = grid_center(lr_rows, lr_cols);
  return {sr_factor * c.x + phase(), sr_factor * c.y + phase()};
}

MotionParams ObservationModel::to_hr(const MotionParams& lr) const {
  return lr.rescaled(sr_factor, phase());
}

MotionParams ObservationModel::to_lr(const MotionParams& hr) const {
  return hr.rescaled(1.0 / sr_factor, -static_cast<double>(phase()) / sr_factor);
}

void ObservationModel::validate() const {
  kernel.validate();
  if (sr_factor < 1) throw ParameterError("sr_factor must be >= 1");
  if (lr_rows <= 0 || lr_cols <= 0) throw DimensionError("observation model needs positive LR dims");
  if (mosaic && (lr_rows % 2 != 0 || lr_cols % 2 != 0)) {
    throw DimensionError("mosaicked frames need even dimensions");
  }
}

double ValidityMask::fraction() const {
  if (valid.empty()) return 0.0;
  const auto n = std::count(valid.begin(), valid.end(), std::uint8_t{1});
  return static_cast<double>(n) / static_cast<double>(valid.size());
}

namespace {

// Bilinear footprint of one sample position. Neighbors are ordered
// (y0,x0), (y0,x0+1), (y0+1,x0), (y0+1,x0+1).
struct Stencil {
  int x0 = 0;
  int y0 = 0;
  double w[4]{};
  double dx[4]{};
  double dy[4]{};

  explicit Stencil(Vec2 s) {
    const double fx0 = std::floor(s.x);
    const double fy0 = std::floor(s.y);
    x0 = static_cast<int>(fx0);
    y0 = static_cast<int>(fy0);
    const double fx = s.x - fx0;
    const double fy = s.y - fy0;
    w[0] = (1.0 - fx) * (1.0 - fy);
    w[1] = fx * (1.0 - fy);
    w[2] = (1.0 - fx) * fy;
    w[3] = fx * fy;
    dx[0] = -(1.0 - fy);
    dx[1] = 1.0 - fy;
    dx[2] = -fy;
    dx[3] = fy;
    dy[0] = -(1.0 - fx);
    dy[1] = -fx;
    dy[2] = 1.0 - fx;
    dy[3] = fx;
  }

  int nx(int n) const { return x0 + (n & 1); }
  int ny(int n) const { return y0 + (n >> 1); }

  static bool inside(int r, int c, int rows, int cols) {
    return r >= 0 && r < rows && c >= 0 && c < cols;
  }

  // All neighbors carrying weight lie inside a rows x cols domain.
  bool valid(int rows, int cols) const {
    for (int n = 0; n < 4; ++n) {
      if (w[n] != 0.0 && !inside(ny(n), nx(n), rows, cols)) return false;
    }
    return true;
  }
};

bool in_range(Vec2 s) {
  // Keeps floor() inside int range for wild parameters.
  return std::abs(s.x) < 1e9 && std::abs(s.y) < 1e9;
}

std::vector<std::uint8_t> warp_validity(const MotionParams& p, int out_rows, int out_cols,
                                        int in_rows, int in_cols) {
  std::vector<std::uint8_t> valid(static_cast<std::size_t>(out_rows) * out_cols, 0);
  for (int r = 0; r < out_rows; ++r) {
    for (int c = 0; c < out_cols; ++c) {
      const Vec2 s = p.map({static_cast<double>(c), static_cast<double>(r)});
      if (!in_range(s)) continue;
      valid[static_cast<std::size_t>(r) * out_cols + c] = Stencil(s).valid(in_rows, in_cols) ? 1 : 0;
    }
  }
  return valid;
}

// LR validity from the HR warp validity: every nonzero blur tap of a site
// must be on the frame grid and warp-valid.
ValidityMask lr_mask(const std::vector<std::uint8_t>& hr_valid, const ObservationModel& m) {
  const int hr_rows = m.hr_rows();
  const int hr_cols = m.hr_cols();
  const int rad = m.kernel.radius();
  const auto& t = m.kernel.taps;
  ValidityMask mask{m.lr_rows, m.lr_cols, std::vector<std::uint8_t>(static_cast<std::size_t>(m.lr_rows) * m.lr_cols, 0)};
  for (int i = 0; i < m.lr_rows; ++i) {
    for (int j = 0; j < m.lr_cols; ++j) {
      const int mr = m.sr_factor * i + m.phase();
      const int mc = m.sr_factor * j + m.phase();
      bool ok = true;
      for (int a = -rad; a <= rad && ok; ++a) {
        if (t[a + rad] == 0.0) continue;
        for (int b = -rad; b <= rad && ok; ++b) {
          if (t[b + rad] == 0.0) continue;
          const int fr = mr - a;
          const int fc = mc - b;
          ok = Stencil::inside(fr, fc, hr_rows, hr_cols) &&
               hr_valid[static_cast<std::size_t>(fr) * hr_cols + fc] != 0;
        }
      }
      mask.valid[static_cast<std::size_t>(i) * m.lr_cols + j] = ok ? 1 : 0;
    }
  }
  return mask;
}

void check_hr(const PixelGrid& x, const ObservationModel& m) {
  if (x.rows() != m.hr_rows() || x.cols() != m.hr_cols() || x.channels() != 3) {
    throw DimensionError("HR image does not match the observation model");
  }
}

}  // namespace

PixelGrid warp_apply(const PixelGrid& x, const MotionParams& p, int out_rows, int out_cols,
                     ValidityMask* mask) {
  if (!p.finite()) throw ParameterError("warp: non-finite motion parameters");
  const int ch = x.channels();
  PixelGrid out(out_rows, out_cols, ch);
  if (mask) *mask = ValidityMask{out_rows, out_cols, std::vector<std::uint8_t>(static_cast<std::size_t>(out_rows) * out_cols, 0)};
  for (int r = 0; r < out_rows; ++r) {
    for (int c = 0; c < out_cols; ++c) {
      const Vec2 s = p.map({static_cast<double>(c), static_cast<double>(r)});
      if (!in_range(s)) continue;
      const Stencil st(s);
      bool ok = true;
      for (int n = 0; n < 4; ++n) {
        if (st.w[n] == 0.0) continue;
        const int yy = st.ny(n);
        const int xx = st.nx(n);
        if (!Stencil::inside(yy, xx, x.rows(), x.cols())) {
          ok = false;
          continue;
        }
        for (int k = 0; k < ch; ++k) out.at(r, c, k) += st.w[n] * x.at(yy, xx, k);
      }
      if (mask) mask->valid[static_cast<std::size_t>(r) * out_cols + c] = ok ? 1 : 0;
    }
  }
  return out;
}

PixelGrid warp_adjoint(const PixelGrid& y, const MotionParams& p, int in_rows, int in_cols) {
  if (!p.finite()) throw ParameterError("warp: non-finite motion parameters");
  const int ch = y.channels();
  PixelGrid out(in_rows, in_cols, ch);
  for (int r = 0; r < y.rows(); ++r) {
    for (int c = 0; c < y.cols(); ++c) {
      const Vec2 s = p.map({static_cast<double>(c), static_cast<double>(r)});
      if (!in_range(s)) continue;
      const Stencil st(s);
      for (int n = 0; n < 4; ++n) {
        if (st.w[n] == 0.0) continue;
        const int yy = st.ny(n);
        const int xx = st.nx(n);
        if (!Stencil::inside(yy, xx, in_rows, in_cols)) continue;
        for (int k = 0; k < ch; ++k) out.at(yy, xx, k) += st.w[n] * y.at(r, c, k);
      }
    }
  }
  return out;
}

PixelGrid warp(const PixelGrid& x, const MotionParams& p, Direction dir, ValidityMask* mask) {
  if (dir == Direction::Apply) return warp_apply(x, p, x.rows(), x.cols(), mask);
  if (mask) {
    *mask = ValidityMask{x.rows(), x.cols(), warp_validity(p, x.rows(), x.cols(), x.rows(), x.cols())};
  }
  return warp_adjoint(x, p, x.rows(), x.cols());
}

PixelGrid blur(const PixelGrid& x, const BlurKernel& k, Direction dir) {
  k.validate();
  const int rows = x.rows();
  const int cols = x.cols();
  const int ch = x.channels();
  const int rad = k.radius();
  // Convolution reads x(m - a); its adjoint, correlation, reads y(m + a).
  const int sign = dir == Direction::Apply ? -1 : 1;
  PixelGrid tmp(rows, cols, ch);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      for (int a = -rad; a <= rad; ++a) {
        const int cc = c + sign * a;
        if (cc < 0 || cc >= cols) continue;
        const double w = k.taps[a + rad];
        for (int q = 0; q < ch; ++q) tmp.at(r, c, q) += w * x.at(r, cc, q);
      }
    }
  }
  PixelGrid out(rows, cols, ch);
  for (int r = 0; r < rows; ++r) {
    for (int a = -rad; a <= rad; ++a) {
      const int rr = r + sign * a;
      if (rr < 0 || rr >= rows) continue;
      const double w = k.taps[a + rad];
      for (int c = 0; c < cols; ++c) {
        for (int q = 0; q < ch; ++q) out.at(r, c, q) += w * tmp.at(rr, c, q);
      }
    }
  }
  return out;
}

PixelGrid decimate_mosaic(const PixelGrid& x, const ObservationModel& m, Direction dir) {
  const int s = m.sr_factor;
  const int ph = m.phase();
  if (dir == Direction::Apply) {
    if (x.rows() % s != 0 || x.cols() % s != 0) {
      throw DimensionError("decimate_mosaic: dimensions not divisible by the SR factor");
    }
    if (x.channels() != 3) throw DimensionError("decimate_mosaic: HR input needs 3 channels");
    const int lr_rows = x.rows() / s;
    const int lr_cols = x.cols() / s;
    if (m.mosaic && (lr_rows % 2 != 0 || lr_cols % 2 != 0)) {
      throw DimensionError("decimate_mosaic: mosaicked frame needs even dimensions");
    }
    PixelGrid out(lr_rows, lr_cols, m.lr_channels());
    for (int i = 0; i < lr_rows; ++i) {
      for (int j = 0; j < lr_cols; ++j) {
        if (m.mosaic) {
          out.at(i, j) = x.at(s * i + ph, s * j + ph, cfa_channel(m.cfa, i, j));
        } else {
          for (int q = 0; q < 3; ++q) out.at(i, j, q) = x.at(s * i + ph, s * j + ph, q);
        }
      }
    }
    return out;
  }
  if (x.channels() != m.lr_channels()) throw DimensionError("decimate_mosaic: wrong frame channels");
  PixelGrid out(x.rows() * s, x.cols() * s, 3);
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < x.cols(); ++j) {
      if (m.mosaic) {
        out.at(s * i + ph, s * j + ph, cfa_channel(m.cfa, i, j)) = x.at(i, j);
      } else {
        for (int q = 0; q < 3; ++q) out.at(s * i + ph, s * j + ph, q) = x.at(i, j, q);
      }
    }
  }
  return out;
}

ValidityMask frame_mask(const ObservationModel& m, const MotionParams& p) {
  return lr_mask(warp_validity(p, m.hr_rows(), m.hr_cols(), m.hr_rows(), m.hr_cols()), m);
}

namespace {

void apply_mask(PixelGrid& frame, const ValidityMask& mask) {
  for (int i = 0; i < frame.rows(); ++i) {
    for (int j = 0; j < frame.cols(); ++j) {
      if (mask.at(i, j)) continue;
      for (int q = 0; q < frame.channels(); ++q) frame.at(i, j, q) = 0.0;
    }
  }
}

}  // namespace

std::vector<PixelGrid> forward(const PixelGrid& x, std::span<const MotionParams> motions,
                               const ObservationModel& m, std::vector<ValidityMask>* masks) {
  m.validate();
  check_hr(x, m);
  std::vector<PixelGrid> frames;
  frames.reserve(motions.size());
  if (masks) masks->clear();
  for (const auto& p : motions) {
    ValidityMask wmask;
    const PixelGrid warped = warp_apply(x, p, m.hr_rows(), m.hr_cols(), &wmask);
    PixelGrid frame = decimate_mosaic(blur(warped, m.kernel, Direction::Apply), m, Direction::Apply);
    ValidityMask mask = lr_mask(wmask.valid, m);
    apply_mask(frame, mask);
    frames.push_back(std::move(frame));
    if (masks) masks->push_back(std::move(mask));
  }
  return frames;
}

PixelGrid forward_adjoint(std::span<const PixelGrid> frames, std::span<const MotionParams> motions,
                          const ObservationModel& m) {
  m.validate();
  if (frames.size() != motions.size()) throw DimensionError("forward_adjoint: frame/motion count mismatch");
  PixelGrid out(m.hr_rows(), m.hr_cols(), 3);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (frames[k].rows() != m.lr_rows || frames[k].cols() != m.lr_cols) {
      throw DimensionError("forward_adjoint: frame size mismatch");
    }
    PixelGrid y = frames[k];
    apply_mask(y, frame_mask(m, motions[k]));
    const PixelGrid back = warp_adjoint(
        blur(decimate_mosaic(y, m, Direction::Adjoint), m.kernel, Direction::Adjoint), motions[k],
        m.hr_rows(), m.hr_cols());
    auto& acc = out.vec();
    const auto& b = back.vec();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += b[i];
  }
  return out;
}

std::vector<PixelGrid> warp_jacobian(const PixelGrid& x, const MotionParams& p) {
  if (!p.finite()) throw ParameterError("warp_jacobian: non-finite motion parameters");
  const int n_par = p.count();
  const int ch = x.channels();
  std::vector<PixelGrid> jac(n_par, PixelGrid(x.rows(), x.cols(), ch));
  std::vector<double> gx(ch), gy(ch);
  for (int r = 0; r < x.rows(); ++r) {
    for (int c = 0; c < x.cols(); ++c) {
      const Vec2 u{static_cast<double>(c), static_cast<double>(r)};
      const Vec2 s = p.map(u);
      if (!in_range(s)) continue;
      const Stencil st(s);
      std::fill(gx.begin(), gx.end(), 0.0);
      std::fill(gy.begin(), gy.end(), 0.0);
      for (int n = 0; n < 4; ++n) {
        const int yy = st.ny(n);
        const int xx = st.nx(n);
        if (!Stencil::inside(yy, xx, x.rows(), x.cols())) continue;
        for (int q = 0; q < ch; ++q) {
          gx[q] += st.dx[n] * x.at(yy, xx, q);
          gy[q] += st.dy[n] * x.at(yy, xx, q);
        }
      }
      for (int j = 0; j < n_par; ++j) {
        const Vec2 d = p.derivative(u, j);
        for (int q = 0; q < ch; ++q) jac[j].at(r, c, q) = gx[q] * d.x + gy[q] * d.y;
      }
    }
  }
  return jac;
}

FrameLinearization linearize_frame(const PixelGrid& x, const MotionParams& p,
                                   const ObservationModel& m, bool with_jacobian) {
  check_hr(x, m);
  if (!p.finite()) throw ParameterError("linearize_frame: non-finite motion parameters");
  const int n_par = with_jacobian ? p.count() : 0;
  const int lr_ch = m.lr_channels();
  const int rad = m.kernel.radius();
  const auto& taps = m.kernel.taps;

  FrameLinearization out;
  out.mask = frame_mask(m, p);
  out.values.assign(m.lr_size(), 0.0);
  out.jacobian.assign(n_par, std::vector<double>(m.lr_size(), 0.0));

  for (int i = 0; i < m.lr_rows; ++i) {
    for (int j = 0; j < m.lr_cols; ++j) {
      if (!out.mask.at(i, j)) continue;
      const int mr = m.sr_factor * i + m.phase();
      const int mc = m.sr_factor * j + m.phase();
      for (int q = 0; q < lr_ch; ++q) {
        const int chan = m.mosaic ? cfa_channel(m.cfa, i, j) : q;
        const std::size_t row = (static_cast<std::size_t>(i) * m.lr_cols + j) * lr_ch + q;
        double value = 0.0;
        double grad[6] = {};
        for (int a = -rad; a <= rad; ++a) {
          for (int b = -rad; b <= rad; ++b) {
            const double kw = taps[a + rad] * taps[b + rad];
            if (kw == 0.0) continue;
            const Vec2 u{static_cast<double>(mc - b), static_cast<double>(mr - a)};
            const Stencil st(p.map(u));
            double gx = 0.0, gy = 0.0;
            for (int n = 0; n < 4; ++n) {
              const int yy = st.ny(n);
              const int xx = st.nx(n);
              if (!Stencil::inside(yy, xx, x.rows(), x.cols())) continue;
              const double v = x.at(yy, xx, chan);
              if (st.w[n] != 0.0) value += kw * st.w[n] * v;
              gx += st.dx[n] * v;
              gy += st.dy[n] * v;
            }
            for (int k = 0; k < n_par; ++k) {
              const Vec2 d = p.derivative(u, k);
              grad[k] += kw * (gx * d.x + gy * d.y);
            }
          }
        }
        out.values[row] = value;
        for (int k = 0; k < n_par; ++k) out.jacobian[k][row] = grad[k];
      }
    }
  }
  return out;
}

StackedOperator::StackedOperator(const ObservationModel& model, std::span<const MotionParams> motions)
    : model_(model), frames_(motions.size()), lr_size_(model.lr_size()), hr_size_(model.hr_size()) {
  model_.validate();
  const ObservationModel& m = model_;
  const int lr_ch = m.lr_channels();
  const int rad = m.kernel.radius();
  const auto& taps = m.kernel.taps;
  const int hr_cols = m.hr_cols();

  row_ptr_.assign(1, 0);
  row_ptr_.reserve(rows() + 1);
  std::vector<std::pair<std::uint32_t, double>> entries;
  for (const auto& p : motions) {
    if (!p.finite()) throw ParameterError("StackedOperator: non-finite motion parameters");
    masks_.push_back(frame_mask(m, p));
    const ValidityMask& mask = masks_.back();
    for (int i = 0; i < m.lr_rows; ++i) {
      for (int j = 0; j < m.lr_cols; ++j) {
        entries.clear();
        if (mask.at(i, j)) {
          const int mr = m.sr_factor * i + m.phase();
          const int mc = m.sr_factor * j + m.phase();
          for (int a = -rad; a <= rad; ++a) {
            for (int b = -rad; b <= rad; ++b) {
              const double kw = taps[a + rad] * taps[b + rad];
              if (kw == 0.0) continue;
              const Stencil st(p.map({static_cast<double>(mc - b), static_cast<double>(mr - a)}));
              for (int n = 0; n < 4; ++n) {
                if (st.w[n] == 0.0) continue;
                entries.emplace_back(static_cast<std::uint32_t>(st.ny(n) * hr_cols + st.nx(n)), kw * st.w[n]);
              }
            }
          }
          std::sort(entries.begin(), entries.end(),
                    [](const auto& l, const auto& r) { return l.first < r.first; });
          std::size_t w = 0;
          for (std::size_t e = 0; e < entries.size(); ++e) {
            if (w > 0 && entries[w - 1].first == entries[e].first) {
              entries[w - 1].second += entries[e].second;
            } else {
              entries[w++] = entries[e];
            }
          }
          entries.resize(w);
        }
        for (int q = 0; q < lr_ch; ++q) {
          const int chan = m.mosaic ? cfa_channel(m.cfa, i, j) : q;
          for (const auto& [pix, wgt] : entries) {
            col_.push_back(pix * 3u + static_cast<std::uint32_t>(chan));
            val_.push_back(wgt);
          }
          row_ptr_.push_back(col_.size());
        }
      }
    }
  }

  // Transposed copy; rows are visited in increasing order so each column's
  // contributions are summed in a fixed order.
  t_row_ptr_.assign(hr_size_ + 1, 0);
  for (auto c : col_) ++t_row_ptr_[c + 1];
  std::partial_sum(t_row_ptr_.begin(), t_row_ptr_.end(), t_row_ptr_.begin());
  t_col_.resize(col_.size());
  t_val_.resize(val_.size());
  std::vector<std::size_t> fill(t_row_ptr_.begin(), t_row_ptr_.end() - 1);
  for (std::size_t r = 0; r + 1 < row_ptr_.size(); ++r) {
    for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) {
      const std::size_t dst = fill[col_[e]]++;
      t_col_[dst] = static_cast<std::uint32_t>(r);
      t_val_[dst] = val_[e];
    }
  }
}

void StackedOperator::apply(std::span<const double> x, std::span<double> y) const {
  if (x.size() != cols() || y.size() != rows()) throw DimensionError("StackedOperator::apply: size mismatch");
  for (std::size_t r = 0; r < rows(); ++r) {
    double acc = 0.0;
    for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) acc += val_[e] * x[col_[e]];
    y[r] = acc;
  }
}

void StackedOperator::adjoint(std::span<const double> y, std::span<double> x) const {
  if (x.size() != cols() || y.size() != rows()) throw DimensionError("StackedOperator::adjoint: size mismatch");
  for (std::size_t c = 0; c < cols(); ++c) {
    double acc = 0.0;
    for (std::size_t e = t_row_ptr_[c]; e < t_row_ptr_[c + 1]; ++e) acc += t_val_[e] * y[t_col_[e]];
    x[c] = acc;
  }
}

std::vector<double> StackedOperator::apply(std::span<const double> x) const {
  std::vector<double> y(rows());
  apply(x, y);
  return y;
}

std::vector<double> StackedOperator::adjoint(std::span<const double> y) const {
  std::vector<double> x(cols());
  adjoint(y, x);
  return x;
}

std::vector<double> StackedOperator::stack(std::span<const PixelGrid> frames) const {
  if (frames.size() != frames_) throw DimensionError("StackedOperator::stack: frame count mismatch");
  const int lr_ch = model_.lr_channels();
  std::vector<double> y(rows(), 0.0);
  for (std::size_t k = 0; k < frames_; ++k) {
    const PixelGrid& f = frames[k];
    if (f.rows() != model_.lr_rows || f.cols() != model_.lr_cols || f.channels() != lr_ch) {
      throw DimensionError("StackedOperator::stack: frame shape mismatch");
    }
    for (int i = 0; i < f.rows(); ++i) {
      for (int j = 0; j < f.cols(); ++j) {
        if (!masks_[k].at(i, j)) continue;
        for (int q = 0; q < lr_ch; ++q) {
          y[k * lr_size_ + (static_cast<std::size_t>(i) * f.cols() + j) * lr_ch + q] = f.at(i, j, q);
        }
      }
    }
  }
  return y;
}

}  // namespace bsr
