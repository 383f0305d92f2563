#pragma once

namespace wsol {

/// Axis-aligned box in half-open pixel coordinates: the covered pixels are
/// x0 <= x < x1, y0 <= y < y1.
struct Box {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    bool valid() const { return x0 < x1 && y0 < y1; }
    long long area() const { return static_cast<long long>(x1 - x0) * (y1 - y0); }

    friend bool operator==(const Box&, const Box&) = default;
};

}  // namespace wsol
