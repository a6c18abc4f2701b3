#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "error.hpp"

namespace tomoclass::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template<class T>
void write_le(std::ostream& os, T value)
{
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<char const*>(&value), sizeof(T));
}

template<class T>
T read_le(std::istream& is, char const* what)
{
    static_assert(std::is_trivially_copyable_v<T>);
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (is.gcount() != static_cast<std::streamsize>(sizeof(T)))
        throw TruncationError(std::string("unexpected end of file reading ")
                              + what);
    return value;
}

//! Read `magic.size()` bytes and compare; throws FormatError on mismatch.
inline void expect_magic(std::istream& is, std::string const& magic,
                         std::string const& format)
{
    std::string buf(magic.size(), '\0');
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (is.gcount() != static_cast<std::streamsize>(buf.size()) || buf != magic)
        throw FormatError("not a " + format + " file (bad magic)");
}

//! Bytes remaining between the current position and the end of the stream.
inline std::uint64_t remaining_bytes(std::istream& is)
{
    auto const here = is.tellg();
    is.seekg(0, std::ios::end);
    auto const end = is.tellg();
    is.seekg(here);
    return static_cast<std::uint64_t>(end - here);
}

//! 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string const& data,
                           std::uint64_t h = 0xcbf29ce484222325ULL)
{
    for (unsigned char c : data)
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace tomoclass::detail
