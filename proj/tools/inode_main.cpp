#include "inode/cli.hpp"

int main(int argc, char** argv) { return inode::cli::run(argc, argv); }
