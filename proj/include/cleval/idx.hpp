#pragma once

// IDX binary reader (the MNIST family container format). All integers are
// big-endian; images file magic is 0x00000803, labels file magic 0x00000801.

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataset.hpp"

namespace cleval {

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& what) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw std::runtime_error("idx: truncated file while reading " + what);
  return (static_cast<std::uint32_t>(buf[0]) << 24) | (static_cast<std::uint32_t>(buf[1]) << 16) |
         (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
}

}  // namespace detail

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot open images file: " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("idx: cannot open labels file: " + labels_path);

  const std::uint32_t img_magic = detail::read_be_u32(img, "images magic");
  if (img_magic != 0x00000803u) {
    throw std::runtime_error("idx: bad images magic (expected 0x00000803)");
  }
  const std::uint32_t n_images = detail::read_be_u32(img, "image count");
  const std::uint32_t rows = detail::read_be_u32(img, "row count");
  const std::uint32_t cols = detail::read_be_u32(img, "column count");
  if (rows != cols) throw std::runtime_error("idx: images are not square");
  if (rows == 0) throw std::runtime_error("idx: zero image dimensions");

  const std::uint32_t lab_magic = detail::read_be_u32(lab, "labels magic");
  if (lab_magic != 0x00000801u) {
    throw std::runtime_error("idx: bad labels magic (expected 0x00000801)");
  }
  const std::uint32_t n_labels = detail::read_be_u32(lab, "label count");
  if (n_images != n_labels) {
    throw std::runtime_error("idx: image count " + std::to_string(n_images) +
                             " does not match label count " + std::to_string(n_labels));
  }

  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> pixels(dim);
  Dataset ds;
  ds.feature_dim = static_cast<int>(dim);
  ds.image_side = static_cast<int>(rows);
  ds.examples.reserve(n_images);
  int max_label = -1;
  for (std::uint32_t i = 0; i < n_images; ++i) {
    img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(dim));
    if (!img) throw std::runtime_error("idx: truncated pixel data at image " + std::to_string(i));
    char lbl = 0;
    lab.read(&lbl, 1);
    if (!lab) throw std::runtime_error("idx: truncated label data at item " + std::to_string(i));
    LabeledExample ex;
    ex.label = static_cast<unsigned char>(lbl);
    ex.features.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      ex.features[d] = static_cast<float>(pixels[d]) / 255.0f;
    }
    max_label = std::max(max_label, ex.label);
    ds.examples.push_back(std::move(ex));
  }
  ds.class_count = max_label + 1;
  return ds;
}

}  // namespace cleval
