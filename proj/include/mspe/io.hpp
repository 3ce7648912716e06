#pragma once

#include "mspe/dataset.hpp"
#include "mspe/patch_embed.hpp"
#include "mspe/vit.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mspe {

/// Checkpoint container, specified to the byte:
///   offset 0: magic "MSPE"
///   offset 4: format version, u32 little-endian (currently 1)
///   offset 8: tensor count, u64 little-endian
///   then one directory entry per tensor, in file order:
///     u32 name length + name bytes, u8 dtype tag (1 = f32, 2 = f64),
///     u32 rank, rank u64 dims, u64 absolute payload byte offset
///   then the payloads: little-endian IEEE-754 scalars, tightly packed.
/// Tensors are keyed by unique names; payload ranges must not overlap.
enum class StoredDtype : std::uint8_t { f32 = 1, f64 = 2 };

struct StoredTensor {
    StoredDtype dtype = StoredDtype::f64;
    std::vector<std::uint64_t> dims;
    std::vector<unsigned char> raw; ///< little-endian payload bytes

    std::size_t element_count() const;
};

/// Name-sorted, so identical contents serialize to identical bytes.
using TensorMap = std::map<std::string, StoredTensor>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Flatten values into a stored tensor. An empty dims list means rank 1
/// with the vector length as the single dimension.
template <typename T>
StoredTensor stored_from(const std::vector<T>& values, std::vector<std::uint64_t> dims = {});

/// Decode a stored tensor; the requested type must match the stored dtype.
template <typename T>
std::vector<T> stored_to(const StoredTensor& tensor);

void save_checkpoint(const std::string& path, const TensorMap& tensors);
TensorMap load_checkpoint(const std::string& path);

/// Everything one training stage hands to the next: the encoder, its
/// configuration, and the patch-kernel bank.
template <typename T>
struct ModelState {
    ViTConfig config;
    ViTParams<T> params;
    PatchKernelBank<T> bank;
};

/// Model-level (de)serialization. Encoder tensors are stored flat under
/// their training names (shapes are implied by the stored configuration);
/// bank kernels keep their full rank-4 dims so per-kernel sizes survive.
template <typename T>
TensorMap checkpoint_from_model(const ModelState<T>& model);
template <typename T>
ModelState<T> model_from_checkpoint(const TensorMap& tensors);

/// Scalar type of the model payload in a loaded checkpoint.
StoredDtype checkpoint_precision(const TensorMap& tensors);

/// IDX binary format (big-endian), as used by common small image datasets:
/// magic bytes {0, 0, dtype, rank} then rank u32 dims then the payload.
/// Only the unsigned-byte dtype (0x08) is supported. Images load as
/// h×w×1 tensors scaled to [0, 1] (255 -> 1.0); the writer rounds back.
template <typename T>
std::vector<Image<T>> load_idx_images(const std::string& path);
std::vector<std::int64_t> load_idx_labels(const std::string& path);

template <typename T>
void save_idx_images(const std::string& path, const std::vector<Image<T>>& images);
void save_idx_labels(const std::string& path, const std::vector<std::int64_t>& labels);

/// Dataset view over fixed-resolution stored images: requests at the stored
/// size return the images as-is, any other size resizes bilinearly.
template <typename T>
LabeledImages<T> load_idx_dataset(const std::string& images_path,
                                  const std::string& labels_path);
template <typename T>
DatasetAt<T> idx_dataset(std::vector<Image<T>> images, std::vector<std::int64_t> labels);

/// Whole-file atomic write: a temp file in the same directory is renamed
/// over the target, so readers never observe a partial file.
void write_file_atomic(const std::string& path, const void* data, std::size_t size);
void write_text_atomic(const std::string& path, const std::string& text);

} // namespace mspe
