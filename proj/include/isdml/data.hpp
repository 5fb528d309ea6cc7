#pragma once

// Multi-domain image datasets: a synthetic glyph benchmark whose domains
// differ in background texture, illumination ramp, contrast polarity and
// noise spectrum; an IDX (MNIST-format) reader; leave-one-domain-out splits;
// and a versioned binary container.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "isdml/image.hpp"
#include "isdml/linalg.hpp"

namespace isdml {

struct DomainDataset {
    std::vector<Image> images;
    std::vector<std::size_t> labels;
    std::vector<std::size_t> domain_ids;
    std::size_t num_classes = 0;
    std::size_t num_domains = 0;

    std::size_t size() const { return images.size(); }
    std::size_t input_dim() const;

    // Lengths agree, ids in range, all images share one shape.
    void validate() const;
    // Additionally: every class is present in every domain.
    void validate_coverage() const;

    // Flattened images of the selected samples, one per row.
    Matrix rows(std::span<const std::size_t> indices) const;
    Matrix all_rows() const;

    friend bool operator==(const DomainDataset&, const DomainDataset&) = default;
};

struct SyntheticSpec {
    std::size_t num_classes = 5;
    std::size_t num_domains = 4;
    std::size_t per_class_per_domain = 100;
    std::size_t image_size = 32;
    std::uint64_t seed = 1;

    static constexpr std::size_t kMaxClasses = 10;
    void validate() const;
};

DomainDataset generate(const SyntheticSpec& spec);

// IDX files: images magic 0x00000803 (n, rows, cols, u8 pixels), labels magic
// 0x00000801 (n, u8 labels). Pixels are scaled by 1/255.
DomainDataset ingest_idx(const std::string& image_file, const std::string& label_file, std::size_t domain_id);
DomainDataset decode_idx(const std::vector<char>& image_bytes, const std::vector<char>& label_bytes,
                         std::size_t domain_id);

// Concatenates datasets with identical image shapes.
DomainDataset concat(const std::vector<DomainDataset>& parts);

struct LodoSplit {
    DomainDataset train;
    DomainDataset target;
    std::size_t target_id = 0;
    std::vector<std::size_t> train_indices;   // positions in the source dataset
    std::vector<std::size_t> target_indices;
};

LodoSplit lodo_split(const DomainDataset& ds, std::size_t target_id);

// Container: "ISDMDATA", u32 version, u32 C, u32 K, u64 n, u32 h, u32 w, u32 c,
// n x u32 labels, n x u32 domain ids, pixels as f32; all little-endian.
std::vector<char> encode_dataset(const DomainDataset& ds);
DomainDataset decode_dataset(const std::vector<char>& bytes);
void save_dataset(const DomainDataset& ds, const std::string& path);
DomainDataset load_dataset(const std::string& path);

// FNV-1a over the container encoding.
std::uint64_t dataset_hash(const DomainDataset& ds);

}  // namespace isdml
