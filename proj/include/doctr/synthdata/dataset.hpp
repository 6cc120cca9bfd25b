#pragma once

// On-disk dataset layout: NNNNNN.img.ppm, NNNNNN.bmap, NNNNNN.mask.pgm,
// NNNNNN.clean.ppm, NNNNNN.shade.pgm, NNNNNN.txt and manifest.tsv.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "doctr/synthdata/synthdata.hpp"

namespace doctr {

struct ManifestEntry {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool operator==(const ManifestEntry&) const = default;
};

std::string sample_stem(std::size_t index);
std::uint64_t sample_seed(std::uint64_t base_seed, std::size_t index);

void write_sample(const std::filesystem::path& dir, std::size_t index, const SampleRecord& r);
/// Reads a sample back; images carry 8-bit quantization from the file format.
SampleRecord read_sample(const std::filesystem::path& dir, const ManifestEntry& entry);

void write_manifest(const std::filesystem::path& dir, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);

/// Generates `count` samples in parallel and writes them with the manifest.
/// Each record is checked against its round-trip invariant before writing.
std::vector<ManifestEntry> synthesize_dataset(const std::filesystem::path& dir, std::size_t count,
                                              std::uint64_t seed, const SynthConfig& cfg = {});

}  // namespace doctr
