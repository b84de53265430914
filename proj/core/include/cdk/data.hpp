#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cdk/loss.hpp"
#include "cdk/rng.hpp"
#include "cdk/tensor.hpp"

namespace cdk {

/// A rendered image (CHW, values in [0, 1]) plus its box annotations.
/// Objects are filled rectangles; the class decides the fill color.
struct SyntheticScene {
    Tensor image; // 3 x H x W
    GroundTruth objects;
};

struct SceneConfig {
    std::int64_t height = 128;
    std::int64_t width = 384;
    std::int64_t min_objects = 1;
    std::int64_t max_objects = 3;
    std::int64_t class_count = 3; // up to 3 color classes
    std::int64_t min_box_w = 20, max_box_w = 70;
    std::int64_t min_box_h = 16, max_box_h = 56;
};

SyntheticScene make_scene(Rng& rng, const SceneConfig& config);
std::vector<SyntheticScene> make_dataset(std::uint64_t seed, std::int64_t n,
                                         const SceneConfig& config);

/// Mirrors an image and its boxes across the vertical axis.
Tensor flip_horizontal(const Tensor& chw);
GroundTruth flip_horizontal(const GroundTruth& gts, double image_w);

/// Image tensor file: magic "CDKI1", u32 LE dims (c, h, w), then 32-bit
/// little-endian values row-major.
void write_image_tensor(const std::filesystem::path& path, const Tensor& chw);
Tensor read_image_tensor(const std::filesystem::path& path);

/// Label file: one `class_name left top right bottom` line per object.
void write_labels(const std::filesystem::path& path, const GroundTruth& gts,
                  std::span<const std::string> class_names);
GroundTruth read_labels(const std::filesystem::path& path,
                        std::span<const std::string> class_names);

struct DatasetEntry {
    std::string id; // file stem
    Tensor image;   // 3 x H x W
    GroundTruth gts;
};

/// Writes scene_NNNN.img / scene_NNNN.txt pairs.
void write_dataset_dir(const std::filesystem::path& dir,
                       const std::vector<SyntheticScene>& scenes,
                       std::span<const std::string> class_names);
std::vector<DatasetEntry> load_dataset_dir(const std::filesystem::path& dir,
                                           std::span<const std::string> class_names);

} // namespace cdk
