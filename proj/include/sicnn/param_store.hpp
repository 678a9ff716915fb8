#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sicnn/autodiff.hpp"

namespace sicnn {

using NamedTensor = std::pair<std::string, Tensor>;

struct Parameter {
    std::string name;
    Var node;
    Tensor velocity;  // momentum buffer, same shape as node->value
};

/// Learnable tensors of one network, kept in insertion order.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}
    // Entries share graph leaves, so copies would alias; use clone().
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    Var add(const std::string& name, Tensor init);
    const Var& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::vector<Parameter>& entries() { return entries_; }
    const std::vector<Parameter>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t parameter_count() const;
    std::uint64_t seed() const { return seed_; }

    void zero_grad();
    void set_requires_grad(bool on);

    std::vector<NamedTensor> values() const;
    std::vector<NamedTensor> velocities() const;
    /// Replaces values in place; names and shapes must match this store exactly.
    void assign_values(const std::vector<NamedTensor>& tensors);
    void assign_velocities(const std::vector<NamedTensor>& tensors);

    /// Deep copy with fresh graph leaves.
    ParamStore clone() const;

private:
    std::uint64_t seed_;
    std::vector<Parameter> entries_;
    std::map<std::string, std::size_t> index_;
};

/// Disables gradient tracking on a store for the guard's lifetime.
class FreezeGuard {
public:
    explicit FreezeGuard(ParamStore& store);
    ~FreezeGuard();
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    ParamStore& store_;
    std::vector<bool> previous_;
};

/// Classical momentum SGD: v <- mu*v + g + wd*p; p <- p - lr*v. Gradients are
/// zeroed afterwards. A non-finite gradient aborts before any parameter moves.
void sgd_step(ParamStore& params, double lr, double momentum, double weight_decay);

// Flat binary tensor container: "SICN", u32 version, u64 count, then per entry
// u64 name length, UTF-8 name, u64 rank, u64 dims, f64 data (all little-endian).
inline constexpr std::uint32_t kTensorFileVersion = 1;
std::string encode_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tensors(const std::string& bytes);
void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path);

}  // namespace sicnn
