#include "petkin/image.hpp"

#include <algorithm>

namespace petkin {

double Image::max_value() const {
    double m = 0.0;
    for (double x : v) m = std::max(m, x);
    return m;
}

double DynamicImage::max_value() const {
    double m = 0.0;
    for (double x : v) m = std::max(m, x);
    return m;
}

int LabelMap::max_label() const {
    int m = 0;
    for (int x : v) m = std::max(m, x);
    return m;
}

std::vector<int> LabelMap::label_counts() const {
    std::vector<int> counts(static_cast<size_t>(max_label()) + 1, 0);
    for (int x : v)
        if (x >= 0) ++counts[static_cast<size_t>(x)];
    return counts;
}

} // namespace petkin
