#include "cli.hpp"

int main(int argc, char** argv) { return exifcons::cli::run(argc, argv); }
