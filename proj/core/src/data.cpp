#include "cdk/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "cdk/error.hpp"

namespace cdk {

namespace {

struct Color {
    double r, g, b;
};

// One distinct fill color per class; the background stays dark gray.
constexpr Color kPalette[3] = {{0.85, 0.15, 0.10}, {0.10, 0.80, 0.15}, {0.15, 0.20, 0.90}};
constexpr double kBackground = 0.18;

void fill_rect(Tensor& image, std::int64_t l, std::int64_t t, std::int64_t r, std::int64_t b,
               const Color& color, Rng& rng) {
    const std::int64_t H = image.extent(1), W = image.extent(2);
    auto v = image.mutable_values();
    const double base[3] = {color.r, color.g, color.b};
    for (std::int64_t y = t; y < b; ++y) {
        for (std::int64_t x = l; x < r; ++x) {
            const double noise = 0.04 * (rng.uniform() - 0.5);
            for (std::int64_t c = 0; c < 3; ++c) {
                const double val = std::clamp(base[c] + noise, 0.0, 1.0);
                v[static_cast<std::size_t>((c * H + y) * W + x)] = val;
            }
        }
    }
}

} // namespace

SyntheticScene make_scene(Rng& rng, const SceneConfig& config) {
    if (config.class_count < 1 || config.class_count > 3)
        fail("E_VALUE", "scene generator supports 1..3 classes");
    if (config.min_objects < 1 || config.max_objects < config.min_objects)
        fail("E_VALUE", "scene generator needs at least one object per image");

    const std::int64_t H = config.height, W = config.width;
    SyntheticScene scene;
    scene.image = Tensor::zeros({3, H, W});
    {
        auto v = scene.image.mutable_values();
        for (double& x : v) x = std::clamp(kBackground + 0.03 * (rng.uniform() - 0.5), 0.0, 1.0);
    }

    const std::int64_t count = rng.uniform_int(config.min_objects, config.max_objects);
    for (std::int64_t obj = 0; obj < count; ++obj) {
        for (int attempt = 0; attempt < 128; ++attempt) {
            const std::int64_t bw = rng.uniform_int(config.min_box_w, config.max_box_w);
            const std::int64_t bh = rng.uniform_int(config.min_box_h, config.max_box_h);
            if (bw >= W - 4 || bh >= H - 4) continue;
            const std::int64_t l = rng.uniform_int(2, W - bw - 2);
            const std::int64_t t = rng.uniform_int(2, H - bh - 2);
            const Box candidate = Box::from_ltrb(static_cast<double>(l), static_cast<double>(t),
                                                 static_cast<double>(l + bw),
                                                 static_cast<double>(t + bh));
            bool clear = true;
            for (const LabeledBox& existing : scene.objects) {
                if (iou(candidate, existing.box) > 0.05 ||
                    (std::abs(candidate.x - existing.box.x) < 24.0 &&
                     std::abs(candidate.y - existing.box.y) < 24.0)) {
                    clear = false;
                    break;
                }
            }
            if (!clear) continue;
            const int class_id = static_cast<int>(rng.uniform_int(0, config.class_count - 1));
            fill_rect(scene.image, l, t, l + bw, t + bh, kPalette[class_id], rng);
            scene.objects.push_back(LabeledBox{candidate, class_id});
            break;
        }
    }
    if (scene.objects.empty()) fail("E_STATE", "failed to place any object in the scene");
    return scene;
}

std::vector<SyntheticScene> make_dataset(std::uint64_t seed, std::int64_t n,
                                         const SceneConfig& config) {
    if (n < 1) fail("E_VALUE", "dataset needs n >= 1 images");
    Rng rng(seed);
    std::vector<SyntheticScene> scenes;
    scenes.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) scenes.push_back(make_scene(rng, config));
    return scenes;
}

Tensor flip_horizontal(const Tensor& chw) {
    if (chw.rank() != 3) fail("E_SHAPE", "flip_horizontal expects a CHW tensor");
    const std::int64_t C = chw.extent(0), H = chw.extent(1), W = chw.extent(2);
    Tensor out = Tensor::zeros({C, H, W});
    const double* src = chw.values().data();
    double* dst = out.mutable_values().data();
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = 0; y < H; ++y) {
            const double* row = src + (c * H + y) * W;
            double* orow = dst + (c * H + y) * W;
            for (std::int64_t x = 0; x < W; ++x) orow[x] = row[W - 1 - x];
        }
    return out;
}

GroundTruth flip_horizontal(const GroundTruth& gts, double image_w) {
    GroundTruth out = gts;
    for (LabeledBox& lb : out) lb.box.x = image_w - lb.box.x;
    return out;
}

namespace {
constexpr char kImageMagic[5] = {'C', 'D', 'K', 'I', '1'};

void write_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) fail("E_PARSE", "truncated " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
} // namespace

void write_image_tensor(const std::filesystem::path& path, const Tensor& chw) {
    if (chw.rank() != 3) fail("E_SHAPE", "image tensor files hold CHW tensors");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("E_IO", "cannot write image tensor '" + path.string() + "'");
    out.write(kImageMagic, sizeof(kImageMagic));
    for (int axis = 0; axis < 3; ++axis)
        write_u32(out, static_cast<std::uint32_t>(chw.extent(axis)));
    for (double v : chw.values()) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(out, bits);
    }
    if (!out) fail("E_IO", "write failure on '" + path.string() + "'");
}

Tensor read_image_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("E_IO", "cannot open image tensor '" + path.string() + "'");
    char magic[5];
    if (!in.read(magic, 5) || std::memcmp(magic, kImageMagic, 5) != 0)
        fail("E_PARSE", "not an image tensor file: '" + path.string() + "'");
    const std::int64_t c = read_u32(in, "image header");
    const std::int64_t h = read_u32(in, "image header");
    const std::int64_t w = read_u32(in, "image header");
    std::vector<double> values(static_cast<std::size_t>(c * h * w));
    for (double& v : values) {
        const std::uint32_t bits = read_u32(in, "image payload");
        float f;
        std::memcpy(&f, &bits, 4);
        v = static_cast<double>(f);
    }
    return Tensor::from_values({c, h, w}, std::move(values));
}

void write_labels(const std::filesystem::path& path, const GroundTruth& gts,
                  std::span<const std::string> class_names) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("E_IO", "cannot write labels '" + path.string() + "'");
    char line[256];
    for (const LabeledBox& lb : gts) {
        if (lb.class_id < 0 || static_cast<std::size_t>(lb.class_id) >= class_names.size())
            fail("E_VALUE", "label class id out of range");
        std::snprintf(line, sizeof(line), "%s %.3f %.3f %.3f %.3f\n",
                      class_names[static_cast<std::size_t>(lb.class_id)].c_str(), lb.box.left(),
                      lb.box.top(), lb.box.right(), lb.box.bottom());
        out << line;
    }
    if (!out) fail("E_IO", "write failure on '" + path.string() + "'");
}

GroundTruth read_labels(const std::filesystem::path& path,
                        std::span<const std::string> class_names) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("E_IO", "cannot open labels '" + path.string() + "'");
    GroundTruth gts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string name;
        double l, t, r, b;
        if (!(fields >> name >> l >> t >> r >> b))
            fail("E_PARSE", "malformed label at " + path.string() + ":" + std::to_string(line_no));
        const auto it = std::find(class_names.begin(), class_names.end(), name);
        if (it == class_names.end())
            fail("E_PARSE", "unknown class '" + name + "' at " + path.string() + ":" +
                                std::to_string(line_no));
        gts.push_back(LabeledBox{Box::from_ltrb(l, t, r, b),
                                 static_cast<int>(it - class_names.begin())});
    }
    return gts;
}

void write_dataset_dir(const std::filesystem::path& dir,
                       const std::vector<SyntheticScene>& scenes,
                       std::span<const std::string> class_names) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail("E_IO", "cannot create dataset directory '" + dir.string() + "'");
    char stem[32];
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        std::snprintf(stem, sizeof(stem), "scene_%04zu", i);
        write_image_tensor(dir / (std::string(stem) + ".img"), scenes[i].image);
        write_labels(dir / (std::string(stem) + ".txt"), scenes[i].objects, class_names);
    }
}

std::vector<DatasetEntry> load_dataset_dir(const std::filesystem::path& dir,
                                           std::span<const std::string> class_names) {
    if (!std::filesystem::is_directory(dir))
        fail("E_IO", "dataset directory '" + dir.string() + "' does not exist");
    std::map<std::string, std::filesystem::path> images;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.path().extension() == ".img") images[entry.path().stem().string()] = entry.path();
    if (images.empty()) fail("E_EMPTY_DATASET", "no .img files under '" + dir.string() + "'");

    std::vector<DatasetEntry> dataset;
    for (const auto& [stem, img_path] : images) {
        DatasetEntry e;
        e.id = stem;
        e.image = read_image_tensor(img_path);
        const auto label_path = img_path.parent_path() / (stem + ".txt");
        if (!std::filesystem::exists(label_path))
            fail("E_IO", "missing label file for '" + stem + "'");
        e.gts = read_labels(label_path, class_names);
        dataset.push_back(std::move(e));
    }
    return dataset;
}

} // namespace cdk
