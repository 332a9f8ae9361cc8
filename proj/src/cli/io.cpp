#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "bsr/cli.hpp"
#include "bsr/error.hpp"
#include "json.hpp"

namespace bsr::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string frame_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%02zu.png", k);
  return buf;
}

ordered_json motion_json(const MotionParams& p) {
  ordered_json j;
  j["model"] = std::string(to_string(p.model));
  j["p"] = std::vector<double>(p.p.begin(), p.p.begin() + p.count());
  j["center"] = {p.center.x, p.center.y};
  return j;
}

MotionParams motion_from_json(const ordered_json& j) {
  MotionParams m(parse_motion_model(j.at("model").get<std::string>()),
                 Vec2{j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()});
  const auto p = j.at("p").get<std::vector<double>>();
  if (static_cast<int>(p.size()) != m.count()) throw Error("meta.json: motion parameter count mismatch");
  std::copy(p.begin(), p.end(), m.p.begin());
  return m;
}

}  // namespace

PixelGrid read_png(const fs::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("cannot decode " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    depth = 8;
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  const int rows = static_cast<int>(png_get_image_height(png, info));
  const int cols = static_cast<int>(png_get_image_width(png, info));
  const int channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(path.string() + ": unsupported channel count");
  }
  const std::size_t stride = png_get_rowbytes(png, info);
  std::vector<unsigned char> buf(stride * rows);
  std::vector<png_bytep> ptrs(rows);
  for (int r = 0; r < rows; ++r) ptrs[r] = buf.data() + stride * r;
  png_read_image(png, ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  PixelGrid g(rows, cols, channels);
  const double scale = depth == 16 ? 65535.0 : 255.0;
  for (int r = 0; r < rows; ++r) {
    for (int i = 0; i < cols * channels; ++i) {
      double v;
      if (depth == 16) {
        std::uint16_t s;
        std::memcpy(&s, ptrs[r] + 2 * i, 2);
        v = s;
      } else {
        v = ptrs[r][i];
      }
      g.vec()[static_cast<std::size_t>(r) * cols * channels + i] = v / scale;
    }
  }
  return g;
}

void write_png16(const fs::path& path, const PixelGrid& grid) {
  if (grid.channels() != 1 && grid.channels() != 3) throw DimensionError("write_png16: need 1 or 3 channels");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("cannot encode " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, grid.cols(), grid.rows(), 16,
               grid.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t n = static_cast<std::size_t>(grid.cols()) * grid.channels();
  std::vector<unsigned char> row(2 * n);
  for (int r = 0; r < grid.rows(); ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = grid.vec()[r * n + i];
      const double c = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
      const auto s = static_cast<std::uint16_t>(std::lround(c * 65535.0));
      row[2 * i] = static_cast<unsigned char>(s >> 8);  // big-endian
      row[2 * i + 1] = static_cast<unsigned char>(s & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ObservationModel BurstOnDisk::model() const {
  ObservationModel m = ObservationModel::make(burst.rows(), burst.cols(), sr_factor, burst.cfa());
  m.kernel = kernel;
  return m;
}

std::string motion_to_json(const MotionParams& p) { return motion_json(p).dump(); }

void write_burst(const fs::path& dir, const SyntheticBurstSample& sample, std::uint64_t seed) {
  fs::create_directories(dir);
  for (std::size_t k = 0; k < sample.burst.size(); ++k) {
    write_png16(dir / frame_name(k), sample.burst.frames[k].grid);
  }
  write_png16(dir / "gt.png", sample.gt_linear.grid);
  ordered_json meta;
  meta["cfa"] = std::string(to_string(sample.burst.cfa()));
  meta["frames"] = sample.burst.size();
  meta["sr_factor"] = sample.model.sr_factor;
  meta["lr_rows"] = sample.model.lr_rows;
  meta["lr_cols"] = sample.model.lr_cols;
  meta["kernel"] = sample.model.kernel.taps;
  meta["noise"] = {{"shot_slope", sample.noise.shot_slope}, {"read_var", sample.noise.read_var}};
  meta["seed"] = seed;
  ordered_json motions = ordered_json::array();
  for (const auto& m : sample.gt_motions) motions.push_back(motion_json(m));
  meta["gt_motions"] = motions;
  meta["gt"] = "gt.png";
  std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";
}

BurstOnDisk read_burst(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw Error("cannot open " + (dir / "meta.json").string());
  ordered_json meta;
  try {
    meta = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("meta.json: " + std::string(e.what()));
  }
  try {
    BurstOnDisk out;
    const CfaPattern cfa = parse_cfa(meta.at("cfa").get<std::string>());
    const auto count = meta.at("frames").get<std::size_t>();
    out.sr_factor = meta.at("sr_factor").get<int>();
    if (meta.contains("kernel")) {
      out.kernel.taps = meta["kernel"].get<std::vector<double>>();
    } else {
      out.kernel = BlurKernel::box(out.sr_factor);
    }
    out.kernel.validate();
    if (meta.contains("noise")) {
      out.noise = {meta["noise"].at("shot_slope").get<double>(), meta["noise"].at("read_var").get<double>()};
    }
    std::vector<RawBayerImage> frames;
    for (std::size_t k = 0; k < count; ++k) {
      const fs::path p = dir / frame_name(k);
      if (!fs::exists(p)) throw Error("meta.json lists " + std::to_string(count) + " frames but " + p.string() +
                                      " is missing");
      PixelGrid g = read_png(p);
      if (g.channels() != 1) throw DimensionError(p.string() + ": expected a single-channel frame");
      frames.emplace_back(std::move(g), cfa);
    }
    if (fs::exists(dir / frame_name(count))) throw Error("more frame files than meta.json lists");
    out.burst = Burst(std::move(frames));
    if (meta.contains("gt_motions")) {
      std::vector<MotionParams> motions;
      for (const auto& j : meta["gt_motions"]) motions.push_back(motion_from_json(j));
      if (motions.size() != count) throw Error("meta.json: gt_motions count mismatch");
      out.gt_motions = std::move(motions);
    }
    if (meta.contains("gt")) {
      PixelGrid g = read_png(dir / meta["gt"].get<std::string>());
      if (g.channels() != 3 || g.rows() != out.burst.rows() * out.sr_factor ||
          g.cols() != out.burst.cols() * out.sr_factor) {
        throw DimensionError("gt.png: dimensions do not match the burst");
      }
      out.gt = RgbImage(std::move(g), ColorSpace::LinearSensor);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error("meta.json: " + std::string(e.what()));
  }
}

}  // namespace bsr::cli
