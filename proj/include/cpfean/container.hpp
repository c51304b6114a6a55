#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cpfean {

/// One named f32 tensor inside a binary container file.
struct TensorEntry {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

// On-disk layout, little-endian throughout:
//   magic "CPFE" | u32 version | u32 entry_count
//   per entry: u32 name_len | name bytes | u32 rank | u32 dims[rank] | f32 payload
//   u32 crc32 over the bytes between entry_count and the crc itself
//
// Throws ValidationError on bad magic, version, truncation, CRC mismatch,
// duplicate names, or zero dims.
void write_container(const std::string& path, const std::vector<TensorEntry>& entries);
std::vector<TensorEntry> read_container(const std::string& path);

/// Entry lookup; throws ValidationError naming the entry when absent.
const TensorEntry& find_entry(const std::vector<TensorEntry>& entries, const std::string& name,
                              const std::string& file);
const TensorEntry* find_entry_opt(const std::vector<TensorEntry>& entries, const std::string& name);

} // namespace cpfean
