#include "cgsam/params.hpp"

#include <cmath>

#include "cgsam/rng.hpp"

namespace cgsam {

int ParameterStore::add(std::string name, Matrix value)
{
    if (index_.contains(name)) throw InternalError("duplicate parameter name: " + name);
    const int idx = static_cast<int>(params_.size());
    index_.emplace(name, idx);
    params_.push_back(Parameter{std::move(name), std::move(value), false});
    return idx;
}

int ParameterStore::find(std::string_view name) const
{
    auto it = index_.find(std::string(name));
    return it == index_.end() ? -1 : it->second;
}

int ParameterStore::index(std::string_view name) const
{
    const int i = find(name);
    if (i < 0) throw InternalError("unknown parameter: " + std::string(name));
    return i;
}

std::vector<int> ParameterStore::select(const std::function<bool(const Parameter&)>& pred) const
{
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
        if (pred(params_[i])) out.push_back(i);
    return out;
}

void ParameterStore::set_trainable(bool trainable)
{
    for (auto& p : params_) p.trainable = trainable;
}

std::size_t ParameterStore::element_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

int ParamBuilder::make(const std::string& name, int rows, int cols, InitSpec init)
{
    shapes_.emplace_back(name, static_cast<std::size_t>(rows) * cols);
    if (counting_only()) return -1;

    Matrix m(rows, cols);
    switch (init.kind) {
    case InitSpec::Kind::zeros:
        break;
    case InitSpec::Kind::ones:
        std::fill(m.data.begin(), m.data.end(), 1.0);
        break;
    case InitSpec::Kind::normal:
    case InitSpec::Kind::trunc_normal: {
        auto gen = substream(seed_, "init", hash_string(name));
        std::normal_distribution<real> nd(0.0, 1.0);
        for (auto& v : m.data) {
            real z = nd(gen);
            if (init.kind == InitSpec::Kind::trunc_normal)
                while (std::abs(z) > 2.0) z = nd(gen);
            v = z * init.stddev;
        }
        break;
    }
    }
    return store_->add(name, std::move(m));
}

}  // namespace cgsam
