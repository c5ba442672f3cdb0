#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace petkin {

// Binary array container:
//   8-byte magic "PKARR\0\0\1"
//   uint32 little-endian header length
//   UTF-8 JSON header {"dims":[...],"dtype":"f32le","order":"row-major","meta":{...}}
//   raw little-endian float32 payload, row-major
struct ArrayFile {
    std::vector<int64_t> dims;
    std::vector<float> data;
    nlohmann::json meta = nlohmann::json::object();

    int64_t element_count() const;
};

void write_array(const std::string& path, const ArrayFile& a);
void write_array(const std::string& path, const std::vector<int64_t>& dims,
                 std::span<const double> values,
                 const nlohmann::json& meta = nlohmann::json::object());

ArrayFile read_array(const std::string& path);

std::vector<double> to_doubles(const ArrayFile& a);

} // namespace petkin
