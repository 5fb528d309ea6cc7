#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace isdml {

// Planar (channel-major) image with pixel values in [0, 1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<double> pixels;  // channels * height * width

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
        : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

    std::size_t plane_size() const { return height * width; }
    double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
    std::span<const double> plane(std::size_t c) const { return {pixels.data() + c * plane_size(), plane_size()}; }
    bool same_shape(const Image& o) const { return height == o.height && width == o.width && channels == o.channels; }

    friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace isdml
