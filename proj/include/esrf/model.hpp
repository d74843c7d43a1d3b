#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "esrf/error.hpp"
#include "esrf/rng.hpp"
#include "esrf/tensor.hpp"

namespace esrf {

/// Generator parameters (the paper's Theta): layer-0 user embeddings, the
/// concrete selector table, and the two-layer reconstruction decoder.
template <typename T>
struct GeneratorParams {
    Tensor<T> e0;      // m x d
    Tensor<T> h;       // k x m, one row per selector neuron
    Tensor<T> dec_w1;  // m x t
    Tensor<T> dec_b1;  // 1 x t
    Tensor<T> dec_w2;  // t x m
    Tensor<T> dec_b2;  // 1 x m

    static GeneratorParams init(std::size_t m, std::size_t d, std::size_t k, std::size_t t,
                                T stddev, Rng& rng) {
        GeneratorParams p;
        p.e0 = gaussian_sample<T>(m, d, stddev, rng);
        p.h = gaussian_sample<T>(k, m, stddev, rng);
        p.dec_w1 = gaussian_sample<T>(m, t, stddev, rng);
        p.dec_b1 = Tensor<T>(1, t);
        p.dec_w2 = gaussian_sample<T>(t, m, stddev, rng);
        p.dec_b2 = Tensor<T>(1, m);
        return p;
    }

    std::vector<Tensor<T>*> tensors() { return {&e0, &h, &dec_w1, &dec_b1, &dec_w2, &dec_b2}; }
    std::vector<std::string> names() const {
        return {"gen.e0", "gen.h", "gen.dec_w1", "gen.dec_b1", "gen.dec_w2", "gen.dec_b2"};
    }
};

/// Discriminator parameters (the paper's Phi): user/item embedding tables and
/// per-layer attention parameters q (1 x 2d), W1 and W2 (d x d).
template <typename T>
struct DiscriminatorParams {
    Tensor<T> user_e0;  // m x d
    Tensor<T> item_e0;  // n x d
    std::vector<Tensor<T>> q;
    std::vector<Tensor<T>> w1;
    std::vector<Tensor<T>> w2;

    static DiscriminatorParams init(std::size_t m, std::size_t n, std::size_t d, std::size_t layers,
                                    T stddev, Rng& rng) {
        DiscriminatorParams p;
        p.user_e0 = gaussian_sample<T>(m, d, stddev, rng);
        p.item_e0 = gaussian_sample<T>(n, d, stddev, rng);
        for (std::size_t l = 0; l < layers; ++l) {
            p.q.push_back(gaussian_sample<T>(1, 2 * d, stddev, rng));
            p.w1.push_back(gaussian_sample<T>(d, d, stddev, rng));
            p.w2.push_back(gaussian_sample<T>(d, d, stddev, rng));
        }
        return p;
    }

    std::size_t layer_count() const { return q.size(); }

    std::vector<Tensor<T>*> tensors() {
        std::vector<Tensor<T>*> out = {&user_e0, &item_e0};
        for (auto& t : q) out.push_back(&t);
        for (auto& t : w1) out.push_back(&t);
        for (auto& t : w2) out.push_back(&t);
        return out;
    }
    std::vector<std::string> names() const {
        std::vector<std::string> out = {"disc.user_e0", "disc.item_e0"};
        for (std::size_t l = 0; l < q.size(); ++l) out.push_back("disc.q." + std::to_string(l));
        for (std::size_t l = 0; l < w1.size(); ++l) out.push_back("disc.w1." + std::to_string(l));
        for (std::size_t l = 0; l < w2.size(); ++l) out.push_back("disc.w2." + std::to_string(l));
        return out;
    }
};

// ---------------------------------------------------------------------------
// Checkpoint format (versioned binary):
//   magic "ESRFCKPT" | u32 version=1 | u64 tensor count
//   per tensor: u32 name length | name | u8 scalar bytes (4|8) | u64 rows |
//               u64 cols | row-major payload
// ---------------------------------------------------------------------------

namespace detail {

template <typename V>
void write_pod(std::ostream& out, V v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& in) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
    return v;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor<T>*>>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("save_checkpoint: cannot open " + path);
    out.write("ESRFCKPT", 8);
    detail::write_pod<std::uint32_t>(out, 1);
    detail::write_pod<std::uint64_t>(out, tensors.size());
    for (const auto& [name, t] : tensors) {
        detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod<std::uint8_t>(out, sizeof(T));
        detail::write_pod<std::uint64_t>(out, t->rows);
        detail::write_pod<std::uint64_t>(out, t->cols);
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->data.size() * sizeof(T)));
    }
}

template <typename T>
std::map<std::string, Tensor<T>> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::string(magic, 8) != "ESRFCKPT") throw InputError("load_checkpoint: bad magic");
    const auto version = detail::read_pod<std::uint32_t>(in);
    if (version != 1) throw InputError("load_checkpoint: unsupported version");
    const auto count = detail::read_pod<std::uint64_t>(in);
    std::map<std::string, Tensor<T>> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = detail::read_pod<std::uint32_t>(in);
        std::string name(len, '\0');
        in.read(name.data(), len);
        const auto scalar = detail::read_pod<std::uint8_t>(in);
        if (scalar != sizeof(T)) throw InputError("load_checkpoint: scalar width mismatch");
        const auto rows = detail::read_pod<std::uint64_t>(in);
        const auto cols = detail::read_pod<std::uint64_t>(in);
        Tensor<T> t(rows, cols);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(T)));
        if (!in) throw InputError("load_checkpoint: truncated file");
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace esrf
