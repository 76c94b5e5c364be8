#include "texanno/png_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <fstream>
#include <iterator>

#include "texanno/errors.hpp"

namespace texanno {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path,
                 const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

const std::vector<int> kPngParams = {cv::IMWRITE_PNG_COMPRESSION, 1};

}  // namespace

std::vector<std::uint8_t> encode_png(const Raster& raster) {
  cv::Mat bgr(raster.height(), raster.width(), CV_8UC3);
  for (int y = 0; y < raster.height(); ++y) {
    const std::uint8_t* src = raster.row(y);
    auto* dst = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < raster.width(); ++x) {
      dst[3 * x] = src[3 * x + 2];
      dst[3 * x + 1] = src[3 * x + 1];
      dst[3 * x + 2] = src[3 * x];
    }
  }
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", bgr, out, kPngParams)) {
    throw Error(ErrorCode::kIo, "png encode failed");
  }
  return out;
}

Raster decode_png(const std::vector<std::uint8_t>& bytes) {
  cv::Mat bgr = cv::imdecode(bytes, cv::IMREAD_COLOR);
  if (bgr.empty() || bgr.depth() != CV_8U) {
    throw Error(ErrorCode::kIo, "not a decodable 8-bit image");
  }
  Raster out(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* src = bgr.ptr<std::uint8_t>(y);
    std::uint8_t* dst = out.row(y);
    for (int x = 0; x < bgr.cols; ++x) {
      dst[3 * x] = src[3 * x + 2];
      dst[3 * x + 1] = src[3 * x + 1];
      dst[3 * x + 2] = src[3 * x];
    }
  }
  return out;
}

Raster read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_bytes(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_png(const std::filesystem::path& path, const Raster& raster) {
  write_bytes(path, encode_png(raster));
}

std::vector<std::uint8_t> encode_mask_png(int width, int height,
                                          const std::vector<std::uint8_t>& bits) {
  if (bits.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::kValidation, "mask size mismatch");
  }
  cv::Mat gray(height, width, CV_8UC1);
  for (int y = 0; y < height; ++y) {
    auto* dst = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < width; ++x)
      dst[x] = bits[static_cast<std::size_t>(y) * width + x] ? 255 : 0;
  }
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", gray, out, kPngParams)) {
    throw Error(ErrorCode::kIo, "mask png encode failed");
  }
  return out;
}

std::vector<std::uint8_t> read_mask_png(const std::filesystem::path& path,
                                        int& width, int& height) {
  cv::Mat gray = cv::imdecode(read_bytes(path), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw Error(ErrorCode::kIo, "bad mask png " + path.string());
  width = gray.cols;
  height = gray.rows;
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const auto* src = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < width; ++x)
      bits[static_cast<std::size_t>(y) * width + x] = src[x] >= 128 ? 1 : 0;
  }
  return bits;
}

}  // namespace texanno
