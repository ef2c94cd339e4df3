#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgsam {

using real = double;

// Base of every error the library throws. Subclasses map onto the error
// categories callers branch on (CLI exit codes, HTTP status).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class InternalError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Dense row-major matrix. Spatial tensors are stored as (H*W) x C with the
/// spatial index in row-major order; vectors are 1 x C.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<real> data;

    Matrix() = default;
    Matrix(int r, int c, real fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill)
    {
        if (r < 0 || c < 0) throw InternalError("Matrix: negative dimension");
    }
    Matrix(int r, int c, std::vector<real> values) : rows(r), cols(c), data(std::move(values))
    {
        if (data.size() != static_cast<std::size_t>(r) * c)
            throw InternalError("Matrix: data size does not match " + std::to_string(r) + "x" + std::to_string(c));
    }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    real& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    real operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    real* ptr(int r, int c) { return data.data() + static_cast<std::size_t>(r) * cols + c; }
    const real* ptr(int r, int c) const { return data.data() + static_cast<std::size_t>(r) * cols + c; }

    std::span<real> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const real> row(int r) const
    {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline std::string shape_str(const Matrix& m)
{
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

/// Grid of spatial positions (rows x cols).
struct GridSize {
    int height = 0;
    int width = 0;
    int count() const { return height * width; }
    friend bool operator==(const GridSize&, const GridSize&) = default;
};

}  // namespace cgsam
