#include "modechoice/hashing.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "modechoice/errors.hpp"

namespace modechoice {

namespace {

std::array<unsigned char, 32> sha256(std::string_view data)
{
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    std::array<unsigned char, 32> digest{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1
        || EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1
        || EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
        throw Error("sha256 failed");
    }
    return digest;
}

} // namespace

std::string sha256_hex(std::string_view data)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (unsigned char b : sha256(data)) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

std::string short_hash(std::string_view data)
{
    return sha256_hex(data).substr(0, 16);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::string_view> parts)
{
    std::string buffer = std::to_string(base);
    for (auto part : parts) {
        // length prefix keeps ("ab","c") and ("a","bc") apart
        buffer += '|';
        buffer += std::to_string(part.size());
        buffer += ':';
        buffer.append(part);
    }
    auto digest = sha256(buffer);
    std::uint64_t seed = 0;
    for (int i = 0; i < 8; ++i) {
        seed = (seed << 8) | digest[static_cast<std::size_t>(i)];
    }
    return seed;
}

} // namespace modechoice
