#pragma once

#include <string>
#include <vector>

// Expressions over the chart (x, y, z) with every coordinate in [0.5, 2].
namespace test_corpus {

inline const std::vector<std::string>& expressions() {
    static const std::vector<std::string> corpus{
        "x",
        "3",
        "pi",
        "x + y + z",
        "x - y - z",
        "x - (y - z)",
        "x*y*z",
        "x/y/z",
        "x/(y/z)",
        "x^2 + y^2",
        "(x + y)^2",
        "x^-1 + y^-2",
        "-x",
        "-x^2",
        "-(x^2)",
        "--x",
        "x*-y",
        "x + -y",
        "2*x - 3*y + 4*z",
        "1/3*x + 2/5",
        "0.5*x + 1.25e-1*y",
        "2.0*x",
        "sin(x)",
        "cos(x*y)",
        "exp(-x^2)",
        "sin(2*pi*x)*cos(2*pi*y)",
        "exp(sin(x) + cos(y))",
        "x^3 - 3*x*y^2",
        "(x - 1)*(x + 1)",
        "x*(y + z)*(y - z)",
        "(x^2 + y^2)/2",
        "x/(1 + y^2)",
        "(x + y)/(x - y + 3)",
        "sin(x)^2 + cos(x)^2",
        "z*x*y - y*x*z + x",
        "x^2*y^3*z^4",
        "(x*y)^3",
        "(x/y)^-2",
        "1/(x*y*z)",
        "exp(x)*exp(-x)",
        "sin(x + y)*sin(x - y)",
        "cos(pi*z)^3",
        "x*sin(y)*exp(z)",
        "(1 + x)^5",
        "y*(x^2 + 1)^-1",
        "2*(x + y) - 2*x",
        "x - 2*x + x",
        "pi*x^2 - pi*y^2",
        "(x + 1)*(y + 1)*(z + 1) - 1",
        "exp(x*y)/(1 + exp(x*y))",
        "sin(cos(exp(x/4)))",
        "((x))",
    };
    return corpus;
}

}  // namespace test_corpus
