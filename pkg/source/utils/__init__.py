# utils package init
