/*
 * Copyright 2026 The cbmx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cbmx/image.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cbmx/error.hpp"

namespace cbmx {
namespace {

constexpr std::string_view kBase64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string EncodePpm(const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

std::string EncodePgm(const GrayImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

RgbImage DecodePpm(std::string_view bytes) {
  // Header: magic, width, height, maxval separated by single whitespace runs.
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
  };
  if (next_token() != "P6") throw Error(ErrorCode::kBadMagic, "not a binary PPM");
  RgbImage image;
  try {
    image.width = std::stoul(next_token());
    image.height = std::stoul(next_token());
    if (next_token() != "255") throw Error(ErrorCode::kInvalidArgument, "PPM maxval must be 255");
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kCorruptOffsets, "malformed PPM header");
  }
  ++pos;  // single whitespace before the raster
  const std::size_t n = image.width * image.height * 3;
  if (bytes.size() < pos + n) throw Error(ErrorCode::kCorruptOffsets, "truncated PPM raster");
  image.pixels.assign(bytes.begin() + pos, bytes.begin() + pos + n);
  return image;
}

void WriteFile(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

RgbImage ImageFromTensor(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw Error(ErrorCode::kShapeMismatch, "expected a [3,H,W] image, got " +
                                               ShapeToString(image.shape()));
  }
  RgbImage out{image.dim(1), image.dim(2), {}};
  out.pixels.resize(out.height * out.width * 3);
  for (std::size_t h = 0; h < out.height; ++h) {
    for (std::size_t w = 0; w < out.width; ++w) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(c, h, w), 0.0, 1.0);
        out.pixels[(h * out.width + w) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return out;
}

std::string Base64Encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint8_t(bytes[i]) << 16) | (std::uint8_t(bytes[i + 1]) << 8) |
                            std::uint8_t(bytes[i + 2]);
    out += kBase64Alphabet[(v >> 18) & 63];
    out += kBase64Alphabet[(v >> 12) & 63];
    out += kBase64Alphabet[(v >> 6) & 63];
    out += kBase64Alphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = std::uint8_t(bytes[i]) << 16;
    out += kBase64Alphabet[(v >> 18) & 63];
    out += kBase64Alphabet[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (std::uint8_t(bytes[i]) << 16) | (std::uint8_t(bytes[i + 1]) << 8);
    out += kBase64Alphabet[(v >> 18) & 63];
    out += kBase64Alphabet[(v >> 12) & 63];
    out += kBase64Alphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string Base64Decode(std::string_view text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (std::size_t i = 0; i < kBase64Alphabet.size(); ++i) {
    lookup[static_cast<unsigned char>(kBase64Alphabet[i])] = static_cast<int>(i);
  }
  std::string out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char ch : text) {
    if (ch == '=') break;
    const int v = lookup[static_cast<unsigned char>(ch)];
    if (v < 0) throw Error(ErrorCode::kInvalidArgument, "invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((acc >> bits) & 0xFF);
    }
  }
  return out;
}

}  // namespace cbmx
