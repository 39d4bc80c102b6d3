#include "uda/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "uda/error.hpp"

namespace uda {

namespace {

Tensor from_mat(const cv::Mat& rgb_f32) {
  Tensor t(rgb_f32.channels(), rgb_f32.rows, rgb_f32.cols);
  for (int y = 0; y < rgb_f32.rows; ++y) {
    const float* row = rgb_f32.ptr<float>(y);
    for (int x = 0; x < rgb_f32.cols; ++x)
      for (int c = 0; c < rgb_f32.channels(); ++c) t.at(c, y, x) = row[x * rgb_f32.channels() + c];
  }
  return t;
}

cv::Mat to_mat(const Tensor& t) {
  cv::Mat m(t.height(), t.width(), CV_32FC(t.channels()));
  for (int y = 0; y < t.height(); ++y) {
    float* row = m.ptr<float>(y);
    for (int x = 0; x < t.width(); ++x)
      for (int c = 0; c < t.channels(); ++c) row[x * t.channels() + c] = t.at(c, y, x);
  }
  return m;
}

}  // namespace

Tensor load_image(const std::string& path, int size) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(ErrorKind::io, "cannot read image " + path);
  cv::Mat rgb, f;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
  if (size > 0 && (f.rows != size || f.cols != size)) {
    cv::Mat r;
    cv::resize(f, r, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
    f = r;
  }
  return from_mat(f);
}

void save_image(const Tensor& image, const std::string& path) {
  if (image.channels() != 3) throw Error(ErrorKind::invalid_argument, "save_image: expected 3 channels");
  cv::Mat f = to_mat(image), u8, bgr;
  f.convertTo(u8, CV_8UC3, 255.0);
  cv::cvtColor(u8, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path, bgr)) throw Error(ErrorKind::io, "cannot write image " + path);
}

Tensor resize_bilinear(const Tensor& image, int height, int width) {
  if (height < 1 || width < 1) throw Error(ErrorKind::invalid_argument, "resize_bilinear: bad target size");
  if (image.height() == height && image.width() == width) return image;
  Tensor out(image.channels(), height, width);
  for (int c = 0; c < image.channels(); ++c) {
    cv::Mat src(image.height(), image.width(), CV_32F, const_cast<float*>(image.channel(c).data()));
    cv::Mat dst(height, width, CV_32F, out.channel(c).data());
    cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  }
  return out;
}

}  // namespace uda
