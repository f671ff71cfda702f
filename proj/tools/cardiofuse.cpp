#include "cardiofuse/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return cardiofuse::cli::run(argc, argv, {std::cout, std::cerr});
}
