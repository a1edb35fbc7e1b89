// Copyright 2026 The privlens Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// PRBE model files, little-endian:
//   "PRBE" u32 version=1 u32 kind
//   kind 1 (classifier): u32 input_dim u32 hidden_dim u32 num_classes, then
//     float32 W1 b1 [W2 b2], matrices row-major (out x in)
//   kind 2/3 (depth/distance): u32 layer u32 k u32 d, float32 B row-major (k x d)

#ifndef PRIVLENS_SRC_PROBE_FORMAT_HPP
#define PRIVLENS_SRC_PROBE_FORMAT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "privlens/errors.hpp"

namespace privlens::detail {

inline constexpr std::uint32_t kProbeVersion = 1;

enum class ProbeKind : std::uint32_t { Classifier = 1, Depth = 2, Distance = 3 };

class ProbeWriter {
 public:
  ProbeWriter(const std::filesystem::path& path, ProbeKind kind) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw FormatError("cannot open '" + path.string() + "' for writing");
    out_.write("PRBE", 4);
    u32(kProbeVersion);
    u32(static_cast<std::uint32_t>(kind));
  }

  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), 4);
  }

  template <typename Derived>
  void matrix(const Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) u32(std::bit_cast<std::uint32_t>(static_cast<float>(m(i, j))));
    }
  }

  void finish() {
    out_.flush();
    if (!out_) throw FormatError("write of probe file failed");
  }

 private:
  std::ofstream out_;
};

class ProbeReader {
 public:
  explicit ProbeReader(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open probe file '" + path.string() + "'");
    data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    if (data_.size() < 4 || std::memcmp(data_.data(), "PRBE", 4) != 0) {
      throw FormatError("bad magic at byte offset 0: not a PRBE file", 0);
    }
    pos_ = 4;
    if (u32() != kProbeVersion) throw FormatError("unsupported PRBE version at byte offset 4", 4);
    const std::uint32_t kind = u32();
    if (kind < 1 || kind > 3) throw FormatError("unknown probe kind " + std::to_string(kind) + " at byte offset 8", 8);
    kind_ = static_cast<ProbeKind>(kind);
  }

  ProbeKind kind() const noexcept { return kind_; }

  std::uint32_t u32() {
    if (data_.size() - pos_ < 4) {
      throw FormatError("truncated probe file at byte offset " + std::to_string(pos_), static_cast<std::int64_t>(pos_));
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(data_[pos_ + i])} << (8 * i);
    pos_ += 4;
    return v;
  }

  Eigen::MatrixXd matrix(std::size_t rows, std::size_t cols) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = std::bit_cast<float>(u32());
    }
    return m;
  }

  void expect_end() const {
    if (pos_ != data_.size()) {
      throw FormatError("trailing bytes in probe file at byte offset " + std::to_string(pos_),
                        static_cast<std::int64_t>(pos_));
    }
  }

 private:
  std::vector<char> data_;
  std::size_t pos_ = 0;
  ProbeKind kind_ = ProbeKind::Classifier;
};

}  // namespace privlens::detail

#endif  // PRIVLENS_SRC_PROBE_FORMAT_HPP
