from .tools import ClassNameResolver, TableFile
