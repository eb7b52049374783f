#ifndef TLDA_IO_HPP
#define TLDA_IO_HPP

// Little-endian binary helpers and the stable 64-bit FNV-1a hash used for
// config and vocabulary identifiers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tlda/error.hpp"

namespace tlda {

static_assert(std::endian::native == std::endian::little,
              "binary artifact helpers assume a little-endian host");

class Fnv1a {
public:
    void update(std::string_view bytes) {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= 0x100000001b3ULL;
        }
    }
    void update(const void* data, std::size_t n) {
        update(std::string_view(static_cast<const char*>(data), n));
    }
    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view bytes) {
    Fnv1a h;
    h.update(bytes);
    return h.digest();
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

inline std::uint64_t parse_hex64(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

namespace bin {

template <typename T>
void write(std::ostream& os, const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read(std::istream& is) {
    static_assert(std::is_trivially_copyable_v<T>);
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw Error(ErrorCode::BadFormat, "truncated binary file");
    return v;
}

inline void write_magic(std::ostream& os, std::string_view magic) {
    os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& is, std::string_view magic) {
    std::string got(magic.size(), '\0');
    is.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!is || got != magic)
        throw Error(ErrorCode::BadFormat, "bad magic, expected " + std::string(magic));
}

// Row-major, regardless of Eigen's storage order.
inline void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) write<double>(os, m(r, c));
}

inline Eigen::MatrixXd read_matrix(std::istream& is, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = read<double>(is);
    return m;
}

inline void write_vector(std::ostream& os, const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) write<double>(os, v(i));
}

inline Eigen::VectorXd read_vector(std::istream& is, Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = read<double>(is);
    return v;
}

} // namespace bin

inline std::ofstream open_out(const std::string& path, bool binary = false) {
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os) throw Error(ErrorCode::SourceUnreadable, "cannot open for writing: " + path);
    return os;
}

inline std::ifstream open_in(const std::string& path, bool binary = false) {
    std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
    if (!is) throw Error(ErrorCode::SourceUnreadable, "cannot open: " + path);
    return is;
}

} // namespace tlda

#endif
