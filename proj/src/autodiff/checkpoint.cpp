#include "stalign/autodiff/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace stalign::ad {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}
    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v;
        std::memcpy(&v, bytes_.data() + pos_, 4);
        pos_ += 4;
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void floats(float* dst, std::size_t n, const char* what) {
        need(n * 4, what);
        std::memcpy(dst, bytes_.data() + pos_, n * 4);
        pos_ += n * 4;
    }

private:
    void need(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw CheckpointError(std::string("checkpoint truncated while reading ") + what + " at offset " +
                                  std::to_string(pos_));
        }
    }
    std::string bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path) {
    std::string out = "STAL";
    put_u32(out, kCheckpointVersion);
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& name = store.names()[i];
        const auto& t = store.tensors()[i];
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        const auto v = t.values();
        out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
    Reader r(std::string(std::istreambuf_iterator<char>(f), {}));
    if (r.str(4, "magic") != "STAL") throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    std::vector<NamedArray> out;
    while (!r.at_end()) {
        NamedArray a;
        const std::uint32_t len = r.u32("name length");
        a.name = r.str(len, "name");
        const std::uint32_t rank = r.u32("rank");
        if (rank > 8) throw CheckpointError("implausible rank " + std::to_string(rank) + " for " + a.name);
        std::size_t n = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            a.shape.push_back(r.u32("dims"));
            n *= a.shape.back();
        }
        a.values.resize(n);
        r.floats(a.values.data(), n, "payload");
        out.push_back(std::move(a));
    }
    return out;
}

void load_checkpoint(ParameterStore& store, const std::filesystem::path& path) {
    const auto arrays = read_checkpoint(path);
    if (arrays.size() != store.size()) {
        throw CheckpointError("checkpoint has " + std::to_string(arrays.size()) + " parameters, model expects " +
                              std::to_string(store.size()));
    }
    for (const auto& a : arrays) {
        if (!store.contains(a.name)) throw CheckpointError("checkpoint parameter " + a.name + " unknown to model");
        auto t = store.get(a.name);
        if (t.shape() != a.shape) {
            throw CheckpointError("parameter " + a.name + " has shape " + shape_str(a.shape) + " in checkpoint but " +
                                  shape_str(t.shape()) + " in model");
        }
        std::copy(a.values.begin(), a.values.end(), t.mutable_values().begin());
    }
}

}  // namespace stalign::ad
