# Source package