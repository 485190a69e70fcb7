#include <iostream>
#include <string>
#include <vector>

#include "udakit/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty()) {
        std::cout << udakit::cli::kUsage;
        return 2;
    }
    return udakit::cli::run(args, std::cout, std::cerr);
}
