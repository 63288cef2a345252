#include "stmf/io.hpp"

#include <cstring>
#include <iomanip>
#include <sstream>

namespace stmf {

static const char kMagic[6] = {'S', 'T', 'M', 'F', '1', '\0'};

void write_stmf1(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    f.write(kMagic, 6);
    uint8_t dtype = 0; // f64
    uint8_t ndim = static_cast<uint8_t>(t.ndim());
    f.write(reinterpret_cast<const char*>(&dtype), 1);
    f.write(reinterpret_cast<const char*>(&ndim), 1);
    for (size_t i = 0; i < t.ndim(); ++i) {
        uint64_t d = t.dim(i);
        unsigned char le[8];
        for (int b = 0; b < 8; ++b) le[b] = static_cast<unsigned char>((d >> (8 * b)) & 0xff);
        f.write(reinterpret_cast<const char*>(le), 8);
    }
    // payload (f64, host assumed little-endian; explicit per-byte write of
    // the shape keeps the header unambiguous)
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

Tensor read_stmf1(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for read: " + path.string());
    char magic[6];
    f.read(magic, 6);
    if (!f || std::memcmp(magic, kMagic, 6) != 0)
        throw std::runtime_error("not an STMF1 file: " + path.string());
    uint8_t dtype = 0, ndim = 0;
    f.read(reinterpret_cast<char*>(&dtype), 1);
    f.read(reinterpret_cast<char*>(&ndim), 1);
    if (dtype != 0) throw std::runtime_error("unsupported dtype in " + path.string());
    std::vector<size_t> shape(ndim);
    for (int i = 0; i < ndim; ++i) {
        unsigned char le[8];
        f.read(reinterpret_cast<char*>(le), 8);
        uint64_t d = 0;
        for (int b = 0; b < 8; ++b) d |= static_cast<uint64_t>(le[b]) << (8 * b);
        shape[i] = d;
    }
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw std::runtime_error("truncated STMF1 file: " + path.string());
    return t;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    f << j.dump(2) << "\n";
}

json read_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open for read: " + path.string());
    json j;
    f >> j;
    return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    f << text;
}

uint64_t config_hash(const json& j) {
    std::string s = j.dump(); // nlohmann objects iterate in sorted key order
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex_u64(uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
    : out_(path, std::ios::trunc), ncols_(columns.size()) {
    if (!out_) throw std::runtime_error("cannot open for write: " + path.string());
    for (size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << "\n";
}

void CsvWriter::row(const std::vector<double>& values) {
    if (values.size() != ncols_) throw std::invalid_argument("CsvWriter: wrong column count");
    out_ << std::setprecision(17);
    for (size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
    out_ << "\n";
}

bool files_identical(const std::filesystem::path& a, const std::filesystem::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb) return false;
    std::vector<char> ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::vector<char> bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    return ba == bb;
}

} // namespace stmf
