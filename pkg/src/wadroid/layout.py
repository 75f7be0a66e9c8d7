"""Canonical on-device layout of the evidence files, relative to a dump root."""

DB_DIR = "data/data/com.whatsapp/databases"
WA_DB = f"{DB_DIR}/wa.db"
MSGSTORE_DB = f"{DB_DIR}/msgstore.db"

FILES_DIR = "data/data/com.whatsapp/files"
AVATARS_DIR = f"{FILES_DIR}/Avatars"
LOGS_DIR = f"{FILES_DIR}/Logs"
MAIN_LOG = f"{LOGS_DIR}/whatsapp.log"
ME_FILE = f"{FILES_DIR}/me"
ME_AVATAR = f"{FILES_DIR}/me.jpg"

SD_DIR = "mnt/sdcard/WhatsApp"
BACKUPS_DIR = f"{SD_DIR}/Databases"
PROFILE_PICTURES_DIR = f"{SD_DIR}/ProfilePictures"
MEDIA_DIR = f"{SD_DIR}/Media"
MEDIA_SENT_DIR = f"{SD_DIR}/Media/Sent"

AVATAR_SUFFIX = ".j"
