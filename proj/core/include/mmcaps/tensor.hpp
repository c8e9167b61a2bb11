#pragma once

#include <atomic>
#include <cstddef>
#include <string>
#include <vector>

namespace mmcaps {

// Byte counts of live tensor storage. `peak` is a high-water mark that only
// moves up; reset_peak() drops it back to the current level so a caller can
// measure the transient allocation of one section.
namespace alloc_stats {

std::int64_t current_bytes();
std::int64_t peak_bytes();
void reset_peak();

namespace detail {
void add(std::int64_t bytes);
void sub(std::int64_t bytes);
}  // namespace detail

}  // namespace alloc_stats

namespace detail {

template <class T>
struct CountingAllocator {
    using value_type = T;

    CountingAllocator() = default;
    template <class U>
    CountingAllocator(const CountingAllocator<U>&) {}

    T* allocate(std::size_t n) {
        alloc_stats::detail::add(static_cast<std::int64_t>(n * sizeof(T)));
        return static_cast<T*>(::operator new(n * sizeof(T)));
    }
    void deallocate(T* p, std::size_t n) {
        alloc_stats::detail::sub(static_cast<std::int64_t>(n * sizeof(T)));
        ::operator delete(p);
    }
    bool operator==(const CountingAllocator&) const { return true; }
    bool operator!=(const CountingAllocator&) const { return false; }
};

}  // namespace detail

// Dense row-major matrix of doubles. Fixed shape after construction; vectors
// are rows×1 or 1×cols, scalars 1×1.
class Tensor {
public:
    Tensor() : rows_(0), cols_(0) {}
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }
    static Tensor full(std::size_t rows, std::size_t cols, double v) { return Tensor(rows, cols, v); }
    static Tensor scalar(double v) { return Tensor(1, 1, v); }
    static Tensor from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& at(std::size_t i) { return data_[i]; }
    double at(std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape_str() const;

    void fill(double v);
    bool all_finite() const;
    double max_abs_diff(const Tensor& o) const;

private:
    std::size_t rows_, cols_;
    std::vector<double, detail::CountingAllocator<double>> data_;
};

// Throws ShapeError naming `who` and both shapes when they differ.
void check_same_shape(const Tensor& a, const Tensor& b, const char* who);

}  // namespace mmcaps
