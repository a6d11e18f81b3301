#ifndef MRT_TENSOR_HPP
#define MRT_TENSOR_HPP

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "mrt/common.hpp"

namespace mrt {

// Minimal reverse-mode autodiff over dense row-major matrices. A Tape owns
// every intermediate; handles are indices into it. Templated on the scalar so
// training runs in float while gradient checks run at double.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct T {  // node handle
    int i = -1;
    bool ok() const { return i >= 0; }
};

template <typename S>
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    T input(Mat<S> v) {
        nodes_.push_back({std::move(v), {}, nullptr});
        return {int(nodes_.size()) - 1};
    }

    const Mat<S>& value(T a) const { return nodes_[size_t(a.i)].value; }
    const Mat<S>& grad(T a) const { return nodes_[size_t(a.i)].grad; }

    size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and runs the tape backwards. `loss` must be
    // 1x1. Gradients accumulate in creation order, so results are
    // deterministic for a fixed graph.
    void backward(T loss) {
        check_shape(value(loss).rows() == 1 && value(loss).cols() == 1,
                    "backward: loss must be scalar");
        for (auto& n : nodes_) {
            n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
        }
        nodes_[size_t(loss.i)].grad(0, 0) = S(1);
        for (size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].backward) {
                nodes_[i].backward();
            }
        }
    }

    // ---- elementwise ----

    T add(T a, T b) {
        same_shape(a, b, "add");
        T out = input(value(a) + value(b));
        set_back(out, [this, a, b, out] {
            g(a) += g(out);
            g(b) += g(out);
        });
        return out;
    }

    T sub(T a, T b) {
        same_shape(a, b, "sub");
        T out = input(value(a) - value(b));
        set_back(out, [this, a, b, out] {
            g(a) += g(out);
            g(b) -= g(out);
        });
        return out;
    }

    T mul(T a, T b) {
        same_shape(a, b, "mul");
        T out = input(value(a).cwiseProduct(value(b)));
        set_back(out, [this, a, b, out] {
            g(a) += g(out).cwiseProduct(value(b));
            g(b) += g(out).cwiseProduct(value(a));
        });
        return out;
    }

    T scale(T a, S s) {
        T out = input(value(a) * s);
        set_back(out, [this, a, out, s] { g(a) += g(out) * s; });
        return out;
    }

    T add_const(T a, S s) {
        T out = input(value(a).array() + s);
        set_back(out, [this, a, out] { g(a) += g(out); });
        return out;
    }

    T silu(T a) {
        Mat<S> sig = (S(1) / (S(1) + (-value(a)).array().exp())).matrix();
        T out = input(value(a).cwiseProduct(sig));
        set_back(out, [this, a, out, sig = std::move(sig)] {
            // d silu = sig * (1 + x * (1 - sig))
            auto x = value(a).array();
            auto sg = sig.array();
            g(a).array() += g(out).array() * sg * (S(1) + x * (S(1) - sg));
        });
        return out;
    }

    // ---- matrix products ----

    T matmul(T a, T b) {
        check_shape(value(a).cols() == value(b).rows(), "matmul: inner dims");
        T out = input(value(a) * value(b));
        set_back(out, [this, a, b, out] {
            g(a) += g(out) * value(b).transpose();
            g(b) += value(a).transpose() * g(out);
        });
        return out;
    }

    T matmul_nt(T a, T b) {  // a * b^T
        check_shape(value(a).cols() == value(b).cols(), "matmul_nt: inner dims");
        T out = input(value(a) * value(b).transpose());
        set_back(out, [this, a, b, out] {
            g(a) += g(out) * value(b);
            g(b) += g(out).transpose() * value(a);
        });
        return out;
    }

    // ---- shape ops ----

    T rows(T a, int r0, int n) {
        check_shape(r0 >= 0 && n >= 0 && r0 + n <= value(a).rows(), "rows: range");
        T out = input(value(a).middleRows(r0, n));
        set_back(out, [this, a, out, r0, n] { g(a).middleRows(r0, n) += g(out); });
        return out;
    }

    T cols(T a, int c0, int n) {
        check_shape(c0 >= 0 && n >= 0 && c0 + n <= value(a).cols(), "cols: range");
        T out = input(value(a).middleCols(c0, n));
        set_back(out, [this, a, out, c0, n] { g(a).middleCols(c0, n) += g(out); });
        return out;
    }

    T concat_rows(const std::vector<T>& parts) {
        check_shape(!parts.empty(), "concat_rows: empty");
        Eigen::Index total = 0, c = value(parts[0]).cols();
        for (T p : parts) {
            check_shape(value(p).cols() == c, "concat_rows: col mismatch");
            total += value(p).rows();
        }
        Mat<S> v(total, c);
        Eigen::Index at = 0;
        for (T p : parts) {
            v.middleRows(at, value(p).rows()) = value(p);
            at += value(p).rows();
        }
        T out = input(std::move(v));
        set_back(out, [this, parts, out] {
            Eigen::Index at = 0;
            for (T p : parts) {
                g(p) += g(out).middleRows(at, value(p).rows());
                at += value(p).rows();
            }
        });
        return out;
    }

    T concat_cols(const std::vector<T>& parts) {
        check_shape(!parts.empty(), "concat_cols: empty");
        Eigen::Index total = 0, r = value(parts[0]).rows();
        for (T p : parts) {
            check_shape(value(p).rows() == r, "concat_cols: row mismatch");
            total += value(p).cols();
        }
        Mat<S> v(r, total);
        Eigen::Index at = 0;
        for (T p : parts) {
            v.middleCols(at, value(p).cols()) = value(p);
            at += value(p).cols();
        }
        T out = input(std::move(v));
        set_back(out, [this, parts, out] {
            Eigen::Index at = 0;
            for (T p : parts) {
                g(p) += g(out).middleCols(at, value(p).cols());
                at += value(p).cols();
            }
        });
        return out;
    }

    T gather_rows(T a, std::vector<int> idx) {
        Mat<S> v(Eigen::Index(idx.size()), value(a).cols());
        for (size_t i = 0; i < idx.size(); ++i) {
            check_shape(idx[i] >= 0 && idx[i] < value(a).rows(), "gather_rows: index");
            v.row(Eigen::Index(i)) = value(a).row(idx[i]);
        }
        T out = input(std::move(v));
        set_back(out, [this, a, out, idx = std::move(idx)] {
            for (size_t i = 0; i < idx.size(); ++i) {
                g(a).row(idx[i]) += g(out).row(Eigen::Index(i));
            }
        });
        return out;
    }

    // ---- broadcasts over rows (v is 1 x cols) ----

    T add_rowvec(T a, T v) {
        check_row(a, v, "add_rowvec");
        T out = input(value(a).rowwise() + value(v).row(0));
        set_back(out, [this, a, v, out] {
            g(a) += g(out);
            g(v).row(0) += g(out).colwise().sum();
        });
        return out;
    }

    T mul_rowvec(T a, T v) {
        check_row(a, v, "mul_rowvec");
        Mat<S> val = value(a).array().rowwise() * value(v).row(0).array();
        T out = input(std::move(val));
        set_back(out, [this, a, v, out] {
            g(a).array() += g(out).array().rowwise() * value(v).row(0).array();
            g(v).row(0).array() +=
                (g(out).array() * value(a).array()).colwise().sum();
        });
        return out;
    }

    // ---- normalizations / nonlinearity on rows ----

    T softmax_rows(T a) {
        Mat<S> v = value(a);
        for (Eigen::Index r = 0; r < v.rows(); ++r) {
            auto row = v.row(r).array();
            S m = row.maxCoeff();
            v.row(r) = (row - m).exp();
            v.row(r) /= v.row(r).sum();
        }
        T out = input(std::move(v));
        set_back(out, [this, a, out] {
            const Mat<S>& y = value(out);
            for (Eigen::Index r = 0; r < y.rows(); ++r) {
                S dot = g(out).row(r).dot(y.row(r));
                g(a).row(r).array() +=
                    y.row(r).array() * (g(out).row(r).array() - dot);
            }
        });
        return out;
    }

    T layernorm_rows(T a, S eps = S(1e-5)) {
        const Mat<S>& x = value(a);
        Eigen::Index c = x.cols();
        Mat<S> y(x.rows(), c);
        Mat<S> inv_sd(x.rows(), 1);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            S mu = x.row(r).mean();
            auto centered = (x.row(r).array() - mu);
            S var = centered.square().sum() / S(c);
            inv_sd(r, 0) = S(1) / std::sqrt(var + eps);
            y.row(r) = centered * inv_sd(r, 0);
        }
        T out = input(y);
        set_back(out, [this, a, out, inv_sd = std::move(inv_sd), c] {
            const Mat<S>& y2 = value(out);
            for (Eigen::Index r = 0; r < y2.rows(); ++r) {
                auto dy = g(out).row(r).array();
                auto yr = y2.row(r).array();
                S mean_dy = dy.sum() / S(c);
                S mean_dyy = (dy * yr).sum() / S(c);
                g(a).row(r).array() += inv_sd(r, 0) * (dy - mean_dy - yr * mean_dyy);
            }
        });
        return out;
    }

    // Rotates feature pairs (2p, 2p+1) by angles whose cos/sin come in
    // (rows x cols/2) matrices; used for rotary position embeddings.
    T rotate_pairs(T a, Mat<S> cosm, Mat<S> sinm) {
        const Mat<S>& x = value(a);
        check_shape(x.cols() % 2 == 0 && cosm.rows() == x.rows() &&
                        cosm.cols() * 2 == x.cols() && sinm.rows() == cosm.rows() &&
                        sinm.cols() == cosm.cols(),
                    "rotate_pairs: shape");
        Mat<S> v(x.rows(), x.cols());
        for (Eigen::Index p = 0; p < cosm.cols(); ++p) {
            auto x0 = x.col(2 * p).array();
            auto x1 = x.col(2 * p + 1).array();
            auto c = cosm.col(p).array();
            auto s = sinm.col(p).array();
            v.col(2 * p) = x0 * c - x1 * s;
            v.col(2 * p + 1) = x0 * s + x1 * c;
        }
        T out = input(std::move(v));
        set_back(out, [this, a, out, cosm = std::move(cosm), sinm = std::move(sinm)] {
            for (Eigen::Index p = 0; p < cosm.cols(); ++p) {
                auto d0 = g(out).col(2 * p).array();
                auto d1 = g(out).col(2 * p + 1).array();
                auto c = cosm.col(p).array();
                auto s = sinm.col(p).array();
                g(a).col(2 * p) += (d0 * c + d1 * s).matrix();
                g(a).col(2 * p + 1) += (-d0 * s + d1 * c).matrix();
            }
        });
        return out;
    }

    // ---- reductions ----

    T mean_sq(T a) {  // mean over all entries of a^2, shape 1x1
        const Mat<S>& x = value(a);
        S n = S(x.size());
        Mat<S> v(1, 1);
        v(0, 0) = x.array().square().sum() / n;
        T out = input(std::move(v));
        set_back(out, [this, a, out, n] {
            g(a) += (S(2) / n) * g(out)(0, 0) * value(a);
        });
        return out;
    }

    T sum(T a) {  // 1x1
        Mat<S> v(1, 1);
        v(0, 0) = value(a).sum();
        T out = input(std::move(v));
        set_back(out, [this, a, out] {
            g(a).array() += g(out)(0, 0);
        });
        return out;
    }

  private:
    struct Node {
        Mat<S> value;
        Mat<S> grad;
        std::function<void()> backward;
    };

    Mat<S>& g(T a) { return nodes_[size_t(a.i)].grad; }

    void set_back(T out, std::function<void()> fn) {
        nodes_[size_t(out.i)].backward = std::move(fn);
    }

    static void check_shape(bool ok, const char* what) {
        if (!ok) {
            throw Error(std::string("tensor: ") + what);
        }
    }
    void same_shape(T a, T b, const char* what) {
        check_shape(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
                    what);
    }
    void check_row(T a, T v, const char* what) {
        check_shape(value(v).rows() == 1 && value(v).cols() == value(a).cols(), what);
    }

    std::vector<Node> nodes_;
};

}  // namespace mrt

#endif
