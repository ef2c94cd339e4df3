#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cgsam/tensor.hpp"

namespace cgsam {

struct Parameter {
    std::string name;
    Matrix value;
    bool trainable = false;
};

/// Named model weights. Names are dotted paths; the top-level prefix is the
/// component (image_encoder., vision_encoder., text_encoder., adapters.,
/// prompt_encoder., mask_decoder.).
class ParameterStore {
public:
    int add(std::string name, Matrix value);

    int size() const { return static_cast<int>(params_.size()); }
    Parameter& operator[](int i) { return params_[i]; }
    const Parameter& operator[](int i) const { return params_[i]; }

    /// -1 when absent.
    int find(std::string_view name) const;
    /// Throws InternalError when absent.
    int index(std::string_view name) const;
    std::vector<int> select(const std::function<bool(const Parameter&)>& pred) const;

    void set_trainable(bool trainable);
    std::size_t element_count() const;

    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, int> index_;
};

struct InitSpec {
    enum class Kind { zeros, ones, trunc_normal, normal };
    Kind kind = Kind::trunc_normal;
    real stddev = 0.02;

    static InitSpec zeros() { return {Kind::zeros, 0.0}; }
    static InitSpec ones() { return {Kind::ones, 0.0}; }
    static InitSpec trunc_normal(real sd = 0.02) { return {Kind::trunc_normal, sd}; }
    static InitSpec normal(real sd) { return {Kind::normal, sd}; }
};

/// Creates parameters either into a store (seeded per name, so the result
/// does not depend on creation order) or, in counting mode, only records
/// their sizes. Models are described once and used both ways.
class ParamBuilder {
public:
    ParamBuilder(ParameterStore& store, std::uint64_t seed) : store_(&store), seed_(seed) {}
    static ParamBuilder counting() { return ParamBuilder(); }

    /// Returns the store index, or -1 in counting mode.
    int make(const std::string& name, int rows, int cols, InitSpec init);

    bool counting_only() const { return store_ == nullptr; }
    /// (name, element count) of every parameter described so far.
    const std::vector<std::pair<std::string, std::size_t>>& shapes() const { return shapes_; }

private:
    ParamBuilder() = default;

    ParameterStore* store_ = nullptr;
    std::uint64_t seed_ = 0;
    std::vector<std::pair<std::string, std::size_t>> shapes_;
};

}  // namespace cgsam
