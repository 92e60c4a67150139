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

#ifndef CBMX_IMAGE_HPP_
#define CBMX_IMAGE_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cbmx/tensor.hpp"

namespace cbmx {

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB triplets

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

// Binary P6 / P5 with maxval 255.
std::string EncodePpm(const RgbImage& image);
std::string EncodePgm(const GrayImage& image);
RgbImage DecodePpm(std::string_view bytes);

void WriteFile(const std::string& path, std::string_view bytes);

// [3,H,W] tensor with values in [0,1] to 8-bit RGB.
RgbImage ImageFromTensor(const Tensor& image);

std::string Base64Encode(std::string_view bytes);
std::string Base64Decode(std::string_view text);

}  // namespace cbmx

#endif  // CBMX_IMAGE_HPP_
