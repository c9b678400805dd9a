#include <vector>

#include "calica/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return calica::cli::run(args);
}
