#include "wsol/data.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wsol/random.hpp"

namespace wsol {

namespace {

constexpr int kShapeKinds = 4;  // square, disk, triangle, cross

constexpr std::array<std::array<double, 3>, 8> kPalette = {{
    {0.85, 0.08, 0.08},  // red
    {0.08, 0.85, 0.08},  // green
    {0.10, 0.10, 0.90},  // blue
    {0.85, 0.85, 0.05},  // yellow
    {0.85, 0.05, 0.85},  // magenta
    {0.05, 0.85, 0.85},  // cyan
    {0.90, 0.90, 0.90},  // white
    {0.90, 0.50, 0.05},  // orange
}};

// Rasterize one shape kind onto an s-by-s boolean grid.
std::vector<std::uint8_t> rasterize_shape(int kind, int s) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(s) * s, 0);
    const double c = (s - 1) / 2.0;
    for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
            bool in = false;
            switch (kind) {
                case 0:  // square
                    in = true;
                    break;
                case 1: {  // disk
                    const double dx = x - c, dy = y - c;
                    in = dx * dx + dy * dy <= (s / 2.0 - 0.25) * (s / 2.0 - 0.25);
                    break;
                }
                case 2: {  // triangle, apex at the top
                    const double half_width = (y + 1) * (s / 2.0) / s;
                    in = std::abs(x - c) <= half_width;
                    break;
                }
                default: {  // cross
                    const int bar = std::max(2, s / 3);
                    const int lo = (s - bar) / 2, hi = lo + bar;
                    in = (x >= lo && x < hi) || (y >= lo && y < hi);
                    break;
                }
            }
            if (in) mask[static_cast<std::size_t>(y) * s + x] = 1;
        }
    }
    return mask;
}

std::uint8_t quantize(double v) {
    const long b = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<std::uint8_t>(b);
}

[[noreturn]] void index_error(const std::filesystem::path& path, int line, const std::string& what) {
    throw IoError(path.string() + ":" + std::to_string(line) + ": " + what);
}

bool parse_int(const std::string& token, int& out) {
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace

int num_shape_kinds() { return kShapeKinds; }

void DatasetSpec::validate() const {
    if (num_classes < 2) throw ConfigError("dataset: num_classes must be >= 2");
    if (num_classes > kShapeKinds * static_cast<int>(kPalette.size())) {
        throw ConfigError("dataset: at most " + std::to_string(kShapeKinds * kPalette.size()) +
                          " shape/color classes are available");
    }
    if (samples_per_class < 1) throw ConfigError("dataset: samples_per_class must be >= 1");
    if (image_size < 16) throw ConfigError("dataset: image_size must be >= 16");
    if (noise_level < 0.0 || noise_level > 1.0) throw ConfigError("dataset: noise_level must lie in [0,1]");
}

Dataset generate(const DatasetSpec& spec) {
    spec.validate();
    const int S = spec.image_size;

    Dataset dataset;
    dataset.num_classes = spec.num_classes;
    dataset.image_size = S;

    int index = 0;
    for (int label = 0; label < spec.num_classes; ++label) {
        const int kind = label % kShapeKinds;
        const auto& color = kPalette[static_cast<std::size_t>(label / kShapeKinds)];
        for (int k = 0; k < spec.samples_per_class; ++k, ++index) {
            Rng rng(splitmix64(splitmix64(spec.seed) ^ (static_cast<std::uint64_t>(index) + 1)));

            Sample sample;
            sample.label = label;
            sample.image = Tensor({3, S, S});
            for (std::size_t i = 0; i < sample.image.size(); ++i) {
                sample.image.data()[i] = rng.uniform(0.0, spec.noise_level);
            }

            // Shape scale in [S/2, 13S/16), placed fully inside the image;
            // the covered-area fraction mirrors single-object classification
            // datasets, where the object dominates the frame.
            const int size = S / 2 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(S * 5 / 16)));
            const int ox = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(S - size - 1)));
            const int oy = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(S - size - 1)));
            const double jitter = rng.uniform(0.9, 1.1);

            const std::vector<std::uint8_t> mask = rasterize_shape(kind, size);
            int bx0 = S, by0 = S, bx1 = 0, by1 = 0;
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    if (!mask[static_cast<std::size_t>(y) * size + x]) continue;
                    const int px = ox + x, py = oy + y;
                    for (int ch = 0; ch < 3; ++ch) {
                        sample.image.data()[(static_cast<std::size_t>(ch) * S + py) * S + px] =
                            std::clamp(color[static_cast<std::size_t>(ch)] * jitter, 0.0, 1.0);
                    }
                    bx0 = std::min(bx0, px);
                    by0 = std::min(by0, py);
                    bx1 = std::max(bx1, px + 1);
                    by1 = std::max(by1, py + 1);
                }
            }
            sample.gt_box = Box{bx0, by0, bx1, by1};
            dataset.samples.push_back(std::move(sample));
        }
    }
    return dataset;
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) {
    if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("write_ppm: image must be [3,H,W]");
    const int H = image.dim(1), W = image.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_ppm: cannot open " + path.string());
    out << "P6\n" << W << " " << H << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(W) * 3);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                row[static_cast<std::size_t>(x) * 3 + ch] =
                    quantize(image.data()[(static_cast<std::size_t>(ch) * H + y) * W + x]);
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("write_ppm: write failed for " + path.string());
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_header_token(std::istream& in) {
    std::string token;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
        } else if (!std::isspace(c)) {
            token.push_back(static_cast<char>(c));
            break;
        }
    }
    while ((c = in.get()) != EOF && !std::isspace(c)) token.push_back(static_cast<char>(c));
    return token;
}

}  // namespace

Tensor read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_ppm: cannot open " + path.string());
    if (next_header_token(in) != "P6") throw IoError("read_ppm: not a binary PPM: " + path.string());
    int W = 0, H = 0, maxval = 0;
    try {
        W = std::stoi(next_header_token(in));
        H = std::stoi(next_header_token(in));
        maxval = std::stoi(next_header_token(in));
    } catch (const std::exception&) {
        throw IoError("read_ppm: malformed header in " + path.string());
    }
    if (W <= 0 || H <= 0 || maxval != 255) throw IoError("read_ppm: unsupported header in " + path.string());

    std::vector<char> bytes(static_cast<std::size_t>(W) * H * 3);
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw IoError("read_ppm: truncated pixel data in " + path.string());
    }
    Tensor image({3, H, W});
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                const auto b = static_cast<std::uint8_t>(bytes[(static_cast<std::size_t>(y) * W + x) * 3 + ch]);
                image.data()[(static_cast<std::size_t>(ch) * H + y) * W + x] = b / 255.0;
            }
        }
    }
    return image;
}

void write_pgm(const Tensor& map, const std::filesystem::path& path) {
    if (map.rank() < 2) throw DimensionError("write_pgm: map must have spatial dims");
    for (int i = 0; i + 2 < map.rank(); ++i) {
        if (map.dim(i) != 1) throw DimensionError("write_pgm: leading dims must be 1");
    }
    const int H = map.dim(map.rank() - 2), W = map.dim(map.rank() - 1);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_pgm: cannot open " + path.string());
    out << "P5\n" << W << " " << H << "\n255\n";
    std::vector<std::uint8_t> bytes(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) bytes[i] = quantize(map.data()[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write_pgm: write failed for " + path.string());
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream index(dir / "index.txt");
    if (!index) throw IoError("save_dataset: cannot open index file in " + dir.string());
    char name[32];
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const Sample& sample = dataset.samples[i];
        std::snprintf(name, sizeof(name), "img_%05zu.ppm", i);
        write_ppm(sample.image, dir / name);
        index << name << " " << sample.label;
        if (sample.gt_box) {
            index << " " << sample.gt_box->x0 << " " << sample.gt_box->y0 << " " << sample.gt_box->x1 << " "
                  << sample.gt_box->y1;
        }
        index << "\n";
    }
    if (!index) throw IoError("save_dataset: index write failed in " + dir.string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const std::filesystem::path index_path = dir / "index.txt";
    std::ifstream index(index_path);
    if (!index) throw IoError("load_dataset: missing index file " + index_path.string());

    Dataset dataset;
    std::string line;
    int line_no = 0;
    int max_label = -1;
    while (std::getline(index, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::vector<std::string> tokens;
        std::string token;
        while (fields >> token) tokens.push_back(token);
        if (tokens.size() != 2 && tokens.size() != 6) {
            index_error(index_path, line_no, "expected 'path label' or 'path label x0 y0 x1 y1'");
        }

        Sample sample;
        sample.image = read_ppm(dir / tokens[0]);
        if (sample.image.dim(1) != sample.image.dim(2)) {
            index_error(index_path, line_no, "image is not square");
        }
        if (dataset.image_size == 0) {
            dataset.image_size = sample.image.dim(1);
        } else if (sample.image.dim(1) != dataset.image_size) {
            index_error(index_path, line_no, "image size differs from the rest of the dataset");
        }
        if (!parse_int(tokens[1], sample.label) || sample.label < 0) {
            index_error(index_path, line_no, "malformed class id '" + tokens[1] + "'");
        }
        if (tokens.size() == 6) {
            Box box;
            int* coords[] = {&box.x0, &box.y0, &box.x1, &box.y1};
            for (int i = 0; i < 4; ++i) {
                if (!parse_int(tokens[static_cast<std::size_t>(2 + i)], *coords[i])) {
                    index_error(index_path, line_no, "malformed box coordinate '" + tokens[static_cast<std::size_t>(2 + i)] + "'");
                }
            }
            const int S = dataset.image_size;
            if (box.x0 < 0 || box.y0 < 0 || box.x1 > S || box.y1 > S || !box.valid()) {
                index_error(index_path, line_no, "out-of-range or empty box");
            }
            sample.gt_box = box;
        }
        max_label = std::max(max_label, sample.label);
        dataset.samples.push_back(std::move(sample));
    }
    dataset.num_classes = max_label + 1;
    return dataset;
}

}  // namespace wsol
