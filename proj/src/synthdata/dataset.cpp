#include "doctr/synthdata/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctr/numerics/errors.hpp"
#include "doctr/numerics/parallel.hpp"

namespace doctr {

namespace fs = std::filesystem;

std::string sample_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

std::uint64_t sample_seed(std::uint64_t base_seed, std::size_t index) { return mix_seed(base_seed, index); }

void write_sample(const fs::path& dir, std::size_t index, const SampleRecord& r) {
  const std::string stem = sample_stem(index);
  write_pnm(dir / (stem + ".img.ppm"), r.distorted);
  write_bmap(dir / (stem + ".bmap"), r.map);
  write_mask_pgm(dir / (stem + ".mask.pgm"), r.mask);
  write_pnm(dir / (stem + ".clean.ppm"), r.clean);
  write_pnm(dir / (stem + ".shade.pgm"), r.shading);
  std::ofstream txt(dir / (stem + ".txt"), std::ios::binary);
  if (!txt) throw IoError("cannot write " + (dir / (stem + ".txt")).string());
  txt << r.text;
}

SampleRecord read_sample(const fs::path& dir, const ManifestEntry& entry) {
  const std::string stem = sample_stem(entry.index);
  SampleRecord r;
  r.seed = entry.seed;
  r.distorted = read_pnm(dir / (stem + ".img.ppm"));
  r.map = read_bmap(dir / (stem + ".bmap"));
  r.mask = read_mask_pgm(dir / (stem + ".mask.pgm"));
  r.clean = read_pnm(dir / (stem + ".clean.ppm"));
  r.shading = read_pnm(dir / (stem + ".shade.pgm"));
  std::ifstream txt(dir / (stem + ".txt"), std::ios::binary);
  if (!txt) throw IoError("cannot open " + (dir / (stem + ".txt")).string());
  std::stringstream ss;
  ss << txt.rdbuf();
  r.text = ss.str();
  return r;
}

void write_manifest(const fs::path& dir, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(dir / "manifest.tsv", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "manifest.tsv").string());
  for (const auto& e : entries) out << e.index << '\t' << e.seed << '\n';
  if (!out) throw IoError("manifest write failed");
}

std::vector<ManifestEntry> read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.tsv");
  if (!in) throw IoError("cannot open " + (dir / "manifest.tsv").string());
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.index >> e.seed)) throw IoError("malformed manifest line: " + line);
    out.push_back(e);
  }
  return out;
}

std::vector<ManifestEntry> synthesize_dataset(const fs::path& dir, std::size_t count, std::uint64_t seed,
                                              const SynthConfig& cfg) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create dataset directory " + dir.string());
  std::vector<ManifestEntry> entries(count);
  for (std::size_t i = 0; i < count; ++i) entries[i] = {i, sample_seed(seed, i)};
  parallel_for(count, [&](std::size_t i) { write_sample(dir, i, gen_sample(entries[i].seed, cfg)); });
  write_manifest(dir, entries);
  return entries;
}

}  // namespace doctr
