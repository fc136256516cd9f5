from .model import PopupForward, PopupNetwork, load_network, save_network
from .templates import ClassEncoding, ObjectTemplate, build_templates, one_hot
