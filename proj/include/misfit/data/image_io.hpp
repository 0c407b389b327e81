// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "misfit/core/error.hpp"
#include "misfit/data/image.hpp"

namespace misfit {

// Decodes PNG (8-bit) and TIFF (8/16-bit) files. Intensities are scaled by
// the container maximum (255 or 65535); resolution is preserved.
inline Image load_image(const std::string& path, int want_channels) {
  if (!std::filesystem::exists(path)) {
    throw IoError("image file not found: " + path);
  }
  cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (raw.empty()) {
    throw FormatError("could not decode image: " + path);
  }
  if (raw.rows <= 0 || raw.cols <= 0) {
    throw ValidationError("zero-sized image: " + path);
  }

  const int depth = raw.depth();
  if (depth != CV_8U && depth != CV_16U) {
    throw FormatError("unsupported sample depth (need 8- or 16-bit unsigned): " + path);
  }
  const double scale = (depth == CV_8U) ? 1.0 / 255.0 : 1.0 / 65535.0;

  cv::Mat m;
  if (raw.channels() == 4) {
    // Drop alpha.
    m = cv::Mat(raw.rows, raw.cols, depth == CV_8U ? CV_8UC3 : CV_16UC3);
    for (int y = 0; y < raw.rows; ++y) {
      for (int x = 0; x < raw.cols; ++x) {
        if (depth == CV_8U) {
          const cv::Vec4b p = raw.at<cv::Vec4b>(y, x);
          m.at<cv::Vec3b>(y, x) = cv::Vec3b(p[0], p[1], p[2]);
        } else {
          const cv::Vec<ushort, 4> p = raw.at<cv::Vec<ushort, 4>>(y, x);
          m.at<cv::Vec3w>(y, x) = cv::Vec3w(p[0], p[1], p[2]);
        }
      }
    }
  } else {
    m = raw;
  }

  Image out;
  out.source_path = path;
  if (want_channels == 1) {
    out = Image(m.rows, m.cols, 1);
    out.source_path = path;
    if (m.channels() == 1) {
      for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
          const double v = (depth == CV_8U) ? m.at<uchar>(y, x) : m.at<ushort>(y, x);
          out.at(y, x, 0) = static_cast<float>(v * scale);
        }
      }
    } else if (m.channels() == 3) {
      // 3-channel container holding grayscale/thermal data: reduce by luminance.
      for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
          double b, g, r;
          if (depth == CV_8U) {
            const cv::Vec3b p = m.at<cv::Vec3b>(y, x);
            b = p[0]; g = p[1]; r = p[2];
          } else {
            const cv::Vec3w p = m.at<cv::Vec3w>(y, x);
            b = p[0]; g = p[1]; r = p[2];
          }
          out.at(y, x, 0) = static_cast<float>((kLumaR * r + kLumaG * g + kLumaB * b) * scale);
        }
      }
    } else {
      throw FormatError("unsupported channel count " + std::to_string(m.channels()) + ": " + path);
    }
  } else if (want_channels == 3) {
    out = Image(m.rows, m.cols, 3);
    out.source_path = path;
    if (m.channels() == 1) {
      for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
          const double v = ((depth == CV_8U) ? m.at<uchar>(y, x) : m.at<ushort>(y, x)) * scale;
          out.at(y, x, 0) = out.at(y, x, 1) = out.at(y, x, 2) = static_cast<float>(v);
        }
      }
    } else if (m.channels() == 3) {
      for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
          double b, g, r;
          if (depth == CV_8U) {
            const cv::Vec3b p = m.at<cv::Vec3b>(y, x);
            b = p[0]; g = p[1]; r = p[2];
          } else {
            const cv::Vec3w p = m.at<cv::Vec3w>(y, x);
            b = p[0]; g = p[1]; r = p[2];
          }
          out.at(y, x, 0) = static_cast<float>(r * scale);
          out.at(y, x, 1) = static_cast<float>(g * scale);
          out.at(y, x, 2) = static_cast<float>(b * scale);
        }
      }
    } else {
      throw FormatError("unsupported channel count " + std::to_string(m.channels()) + ": " + path);
    }
  } else {
    throw ValidationError("want_channels must be 1 or 3");
  }
  return out;
}

// Writes an 8-bit PNG; values are clamped to [0,1] and rounded.
inline void save_png(const Image& img, const std::string& path) {
  cv::Mat m(img.h, img.w, img.c == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      auto to8 = [](float v) {
        const float cl = std::min(1.0f, std::max(0.0f, v));
        return static_cast<uchar>(std::lround(cl * 255.0f));
      };
      if (img.c == 1) {
        m.at<uchar>(y, x) = to8(img.at(y, x, 0));
      } else {
        m.at<cv::Vec3b>(y, x) = cv::Vec3b(to8(img.at(y, x, 2)), to8(img.at(y, x, 1)), to8(img.at(y, x, 0)));
      }
    }
  }
  if (!cv::imwrite(path, m)) {
    throw IoError("could not write PNG: " + path);
  }
}

// Loads a visual-thermal pair, preserving the original resolutions.
inline ImagePair load_image_pair(const std::string& visual_path, const std::string& thermal_path) {
  ImagePair pair;
  pair.visual = load_image(visual_path, 3);
  pair.thermal = load_image(thermal_path, 1);
  validate_image(pair.visual, "visual image");
  validate_image(pair.thermal, "thermal image");
  pair.aligned = false;
  return pair;
}

}  // namespace misfit
