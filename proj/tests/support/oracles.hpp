#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace mmeval::test {

// Splits UTF-8 into code points.
inline std::vector<std::string> code_points(const std::string& s) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < s.size();) {
        const auto c = static_cast<unsigned char>(s[i]);
        const std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : 4;
        out.push_back(s.substr(i, len));
        i += len;
    }
    return out;
}

inline bool naive_substring(const std::vector<std::string>& a, const std::vector<std::string>& r) {
    if (a.size() > r.size()) return false;
    for (std::size_t start = 0; start + a.size() <= r.size(); ++start) {
        bool all = true;
        for (std::size_t k = 0; k < a.size() && all; ++k) all = r[start + k] == a[k];
        if (all) return true;
    }
    return false;
}

// Longest-common-subsequence table; a is a subsequence iff LCS == |a|.
inline bool lcs_subsequence(const std::vector<std::string>& a, const std::vector<std::string>& r) {
    std::vector<std::vector<std::size_t>> dp(a.size() + 1, std::vector<std::size_t>(r.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= r.size(); ++j) {
            dp[i][j] = a[i - 1] == r[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
        }
    }
    return dp[a.size()][r.size()] == a.size();
}

// Raw-moment correlation in long double.
inline double raw_moment_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += static_cast<long double>(x[i]) * x[i];
        syy += static_cast<long double>(y[i]) * y[i];
        sxy += static_cast<long double>(x[i]) * y[i];
    }
    const long double n = static_cast<long double>(x.size());
    return static_cast<double>((n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

}  // namespace mmeval::test
