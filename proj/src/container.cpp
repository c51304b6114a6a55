#include "cpfean/container.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <set>

#include "cpfean/errors.hpp"

namespace cpfean {

namespace {

constexpr char kMagic[4] = {'C', 'P', 'F', 'E'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_f32(std::vector<unsigned char>& out, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

class Reader {
public:
    Reader(const unsigned char* p, std::size_t n, std::string file)
        : p_(p), n_(n), file_(std::move(file)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = static_cast<std::uint32_t>(p_[pos_]) |
                          (static_cast<std::uint32_t>(p_[pos_ + 1]) << 8) |
                          (static_cast<std::uint32_t>(p_[pos_ + 2]) << 16) |
                          (static_cast<std::uint32_t>(p_[pos_ + 3]) << 24);
        pos_ += 4;
        return v;
    }

    float f32() {
        std::uint32_t v = u32();
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }

    std::string bytes(std::size_t k) {
        need(k);
        std::string s(reinterpret_cast<const char*>(p_ + pos_), k);
        pos_ += k;
        return s;
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return n_ - pos_; }

private:
    void need(std::size_t k) {
        if (pos_ + k > n_) throw ValidationError("container: truncated file " + file_);
    }

    const unsigned char* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
    std::string file_;
};

} // namespace

void write_container(const std::string& path, const std::vector<TensorEntry>& entries) {
    std::set<std::string> seen;
    for (const auto& e : entries) {
        require(seen.insert(e.name).second, "container: duplicate entry name '" + e.name + "'");
        require(!e.dims.empty(), "container: entry '" + e.name + "' has no dims");
        require(e.element_count() == e.data.size(),
                "container: entry '" + e.name + "' dims do not match payload length");
    }

    std::vector<unsigned char> body; // everything after magic+version, before crc
    put_u32(body, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put_u32(body, static_cast<std::uint32_t>(e.name.size()));
        body.insert(body.end(), e.name.begin(), e.name.end());
        put_u32(body, static_cast<std::uint32_t>(e.dims.size()));
        for (auto d : e.dims) put_u32(body, d);
        for (float f : e.data) put_f32(body, f);
    }
    // crc over the entries region only (count excluded)
    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, body.data() + 4, static_cast<uInt>(body.size() - 4)));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "container: cannot open for writing: " + path);
    out.write(kMagic, 4);
    std::vector<unsigned char> head;
    put_u32(head, kVersion);
    out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
    out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
    std::vector<unsigned char> tail;
    put_u32(tail, crc);
    out.write(reinterpret_cast<const char*>(tail.data()), static_cast<std::streamsize>(tail.size()));
    require(out.good(), "container: write failed: " + path);
}

std::vector<TensorEntry> read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "container: cannot open: " + path);
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    require(raw.size() >= 16, "container: truncated file " + path);
    require(std::memcmp(raw.data(), kMagic, 4) == 0,
            "container: bad magic in " + path + " (expected CPFE)");

    Reader r(raw.data() + 4, raw.size() - 4, path);
    const std::uint32_t version = r.u32();
    require(version == kVersion, "container: unsupported version " + std::to_string(version) +
                                     " in " + path);
    const std::size_t body_start = 4 + r.pos(); // offset of entry_count in raw
    const std::uint32_t count = r.u32();

    std::vector<TensorEntry> entries;
    std::set<std::string> seen;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorEntry e;
        const std::uint32_t name_len = r.u32();
        e.name = r.bytes(name_len);
        require(seen.insert(e.name).second,
                "container: duplicate entry name '" + e.name + "' in " + path);
        const std::uint32_t rank = r.u32();
        require(rank >= 1 && rank <= 8, "container: entry '" + e.name + "' has bad rank in " + path);
        std::size_t n = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            const std::uint32_t d = r.u32();
            require(d >= 1, "container: entry '" + e.name + "' has zero dim in " + path);
            e.dims.push_back(d);
            n *= d;
        }
        e.data.resize(n);
        for (std::size_t k = 0; k < n; ++k) e.data[k] = r.f32();
        entries.push_back(std::move(e));
    }
    require(r.remaining() == 4, "container: trailing bytes in " + path);
    const std::size_t crc_off = 4 + r.pos();
    const std::uint32_t stored = r.u32();
    const std::uint32_t actual = static_cast<std::uint32_t>(
        crc32(0L, raw.data() + body_start + 4, static_cast<uInt>(crc_off - body_start - 4)));
    require(stored == actual, "container: CRC mismatch in " + path);
    return entries;
}

const TensorEntry& find_entry(const std::vector<TensorEntry>& entries, const std::string& name,
                              const std::string& file) {
    for (const auto& e : entries)
        if (e.name == name) return e;
    throw ValidationError("container: missing entry '" + name + "' in " + file);
}

const TensorEntry* find_entry_opt(const std::vector<TensorEntry>& entries,
                                  const std::string& name) {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

} // namespace cpfean
