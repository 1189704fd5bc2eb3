#include "dbm/cli.hpp"

int main(int argc, char** argv) { return dbm::cli::dispatch(argc, argv); }
