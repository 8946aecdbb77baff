#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "samnet/image.hpp"

namespace samnet {

namespace fs = std::filesystem;

inline void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw IoError("file not found: " + p.string());
}

// PNG/JPEG to (3, H, W) in [0, 1]; grayscale inputs are replicated.
inline Image read_image(const fs::path& path) {
  require_file(path);
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw IoError("cannot decode image: " + path.string());
  Image img(3, m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      const auto& px = m.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = px[2 - c] / 255.0f;  // BGR
    }
  return img;
}

inline void write_image(const fs::path& path, const Image& img) {
  require_image(img, "write_image");
  cv::Mat m(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c)
        m.at<cv::Vec3b>(y, x)[2 - c] = static_cast<std::uint8_t>(std::lround(std::clamp(img.at(c, y, x), 0.0f, 1.0f) * 255.0f));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw IoError("cannot write image: " + path.string());
}

// Single-channel PNG mask; values above 127 are foreground.
inline Mask read_mask(const fs::path& path) {
  require_file(path);
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw IoError("cannot decode mask: " + path.string());
  Mask out(1, m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) out.at(0, y, x) = m.at<std::uint8_t>(y, x) > 127 ? 1.0f : 0.0f;
  return out;
}

inline void write_mask(const fs::path& path, const Mask& mask) {
  cv::Mat m(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) m.at<std::uint8_t>(y, x) = mask.at(0, y, x) > 0.5f ? 255 : 0;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw IoError("cannot write mask: " + path.string());
}

// Grayscale visualization of a (1, H, W) map scaled by its maximum.
inline void write_heatmap(const fs::path& path, const Tensor<float>& map) {
  float mx = 0;
  for (float v : map.vec()) mx = std::max(mx, v);
  Image img(3, map.height(), map.width());
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < map.plane(); ++i) img[c * map.plane() + i] = mx > 0 ? map[i] / mx : 0.0f;
  write_image(path, img);
}

// Middlebury .flo: "PIEH" tag, int32 width, int32 height, interleaved float32 (u, v).
inline void write_flo(const fs::path& path, const Tensor<float>& flow) {
  if (flow.rank() != 3 || flow.channels() != 2) throw ShapeError("write_flo: flow must be (2, H, W)");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write flow: " + path.string());
  const float tag = 202021.25f;
  const std::int32_t w = flow.width(), h = flow.height();
  out.write(reinterpret_cast<const char*>(&tag), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float uv[2] = {flow.at(0, y, x), flow.at(1, y, x)};
      out.write(reinterpret_cast<const char*>(uv), 8);
    }
}

inline Tensor<float> read_flo(const fs::path& path) {
  require_file(path);
  std::ifstream in(path, std::ios::binary);
  char tag[4];
  std::int32_t w = 0, h = 0;
  in.read(tag, 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  if (!in || std::memcmp(tag, "PIEH", 4) != 0 || w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16))
    throw IoError("malformed flow file: " + path.string());
  Tensor<float> flow(2, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float uv[2];
      in.read(reinterpret_cast<char*>(uv), 8);
      flow.at(0, y, x) = uv[0];
      flow.at(1, y, x) = uv[1];
    }
  if (!in) throw IoError("truncated flow file: " + path.string());
  return flow;
}

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw IoError("cannot format number");
  return std::string(buf, end);
}

inline double parse_double(const std::string& s) {
  double v = 0;
  const char* b = s.data();
  while (b < s.data() + s.size() && *b == ' ') ++b;
  const char* e = s.data() + s.size();
  while (e > b && (e[-1] == ' ' || e[-1] == '\r' || e[-1] == '\t')) --e;
  auto [end, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || end == b || end != e) throw IoError("not a number: '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

inline std::string read_text(const fs::path& path) {
  require_file(path);
  std::ifstream in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

}  // namespace samnet
