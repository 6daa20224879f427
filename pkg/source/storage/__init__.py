# storage package init
