#include "petkin/arrayfile.hpp"

#include <cstring>
#include <fstream>

#include "petkin/errors.hpp"

namespace petkin {

namespace {
const unsigned char kMagic[8] = {'P', 'K', 'A', 'R', 'R', 0, 0, 1};

// Payload is raw IEEE-754 float32; written byte-by-byte little-endian so
// files are identical regardless of host endianness.
void put_f32le(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    out.push_back(static_cast<char>(bits & 0xff));
    out.push_back(static_cast<char>((bits >> 8) & 0xff));
    out.push_back(static_cast<char>((bits >> 16) & 0xff));
    out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

float get_f32le(const unsigned char* p) {
    const uint32_t bits = uint32_t(p[0]) | (uint32_t(p[1]) << 8) |
                          (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}
} // namespace

int64_t ArrayFile::element_count() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

void write_array(const std::string& path, const ArrayFile& a) {
    if (a.dims.empty()) throw DataError("array write: dims must be non-empty");
    for (int64_t d : a.dims)
        if (d <= 0) throw DataError("array write: dims must be positive");
    if (a.element_count() != static_cast<int64_t>(a.data.size()))
        throw DataError("array write: dims do not match payload size");

    nlohmann::json header;
    header["dims"] = a.dims;
    header["dtype"] = "f32le";
    header["order"] = "row-major";
    header["meta"] = a.meta;
    const std::string hs = header.dump();

    std::string out;
    out.reserve(8 + 4 + hs.size() + a.data.size() * 4);
    out.append(reinterpret_cast<const char*>(kMagic), 8);
    const uint32_t hlen = static_cast<uint32_t>(hs.size());
    out.push_back(static_cast<char>(hlen & 0xff));
    out.push_back(static_cast<char>((hlen >> 8) & 0xff));
    out.push_back(static_cast<char>((hlen >> 16) & 0xff));
    out.push_back(static_cast<char>((hlen >> 24) & 0xff));
    out.append(hs);
    for (float v : a.data) put_f32le(out, v);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("array write: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("array write: short write to " + path);
}

void write_array(const std::string& path, const std::vector<int64_t>& dims,
                 std::span<const double> values, const nlohmann::json& meta) {
    ArrayFile a;
    a.dims = dims;
    a.meta = meta;
    a.data.resize(values.size());
    for (size_t i = 0; i < values.size(); ++i)
        a.data[i] = static_cast<float>(values[i]);
    write_array(path, a);
}

ArrayFile read_array(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("array read: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
    if (bytes.size() < 12) throw DataError("array read: truncated file " + path);
    if (std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw DataError("array read: bad magic in " + path);

    const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const uint32_t hlen = uint32_t(p[8]) | (uint32_t(p[9]) << 8) |
                          (uint32_t(p[10]) << 16) | (uint32_t(p[11]) << 24);
    if (bytes.size() < 12 + static_cast<size_t>(hlen))
        throw DataError("array read: truncated header in " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(12, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("array read: bad header in " + path + ": " + e.what());
    }
    if (header.value("dtype", "") != "f32le")
        throw DataError("array read: unsupported dtype in " + path);
    if (header.value("order", "") != "row-major")
        throw DataError("array read: unsupported order in " + path);

    ArrayFile a;
    a.dims = header.at("dims").get<std::vector<int64_t>>();
    a.meta = header.value("meta", nlohmann::json::object());
    const int64_t n = a.element_count();
    if (n < 0 || bytes.size() != 12 + hlen + static_cast<size_t>(n) * 4)
        throw DataError("array read: payload size mismatch in " + path);
    a.data.resize(static_cast<size_t>(n));
    const unsigned char* payload = p + 12 + hlen;
    for (int64_t i = 0; i < n; ++i) a.data[static_cast<size_t>(i)] = get_f32le(payload + i * 4);
    return a;
}

std::vector<double> to_doubles(const ArrayFile& a) {
    return std::vector<double>(a.data.begin(), a.data.end());
}

} // namespace petkin
